#pragma once

#include "wdro/measures.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace wdro::testing {

inline Vector random_vector(std::mt19937_64& rng, int d, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Vector v(d);
  for (int i = 0; i < d; ++i) v[i] = n(rng);
  return v;
}

inline DiscreteMeasure random_measure(std::mt19937_64& rng, int n, int d, bool uniform = false) {
  std::uniform_real_distribution<double> u(0.1, 1.0);
  std::vector<Vector> atoms;
  std::vector<double> w;
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    atoms.push_back(random_vector(rng, d));
    w.push_back(uniform ? 1.0 : u(rng));
    total += w.back();
  }
  for (auto& x : w) x /= total;
  // renormalize the last weight so the sum is 1 to rounding
  double head = 0.0;
  for (int i = 0; i + 1 < n; ++i) head += w[static_cast<std::size_t>(i)];
  w.back() = 1.0 - head;
  return DiscreteMeasure(atoms, w);
}

inline DiscreteMeasure atoms_1d(std::vector<double> xs) {
  std::vector<Vector> a;
  for (double x : xs) a.push_back(Vector::Constant(1, x));
  return make_empirical(a);
}

inline double rel_gap(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace wdro::testing
