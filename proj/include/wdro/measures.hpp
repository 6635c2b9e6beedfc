#pragma once

#include "wdro/numerics.hpp"

#include <json.hpp>

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace wdro {

/// Finitely supported probability measure on R^d.
///
/// Weights below 1e-15 are dropped on construction. The remaining weights
/// must be nonnegative and sum to one within 1e-12; all atoms must share the
/// same dimension and have finite coordinates.
class DiscreteMeasure {
 public:
  DiscreteMeasure(std::vector<Vector> atoms, std::vector<double> weights);

  std::size_t size() const { return atoms_.size(); }
  int dim() const { return static_cast<int>(atoms_.front().size()); }
  const Vector& atom(std::size_t i) const { return atoms_[i]; }
  double weight(std::size_t i) const { return weights_[i]; }
  const std::vector<Vector>& atoms() const { return atoms_; }
  const std::vector<double>& weights() const { return weights_; }

  Vector mean() const;

  /// sum_i w_i fn(x_i), accumulated in atom order.
  template <class Fn>
  double integrate(Fn&& fn) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < atoms_.size(); ++i) acc += weights_[i] * fn(atoms_[i]);
    return acc;
  }

 private:
  std::vector<Vector> atoms_;
  std::vector<double> weights_;
};

/// Uniform weights 1/N on the samples; duplicates are kept as separate atoms.
DiscreteMeasure make_empirical(std::span<const Vector> samples);

/// Seminorm |.|_s restricted to a subset of active coordinates, together with
/// the Wasserstein order p.
///
/// The dual norm is the l^r norm (1/r + 1/s = 1) on the active coordinates
/// and +infinity on vectors with a nonzero inactive coordinate, so transport
/// can only move the active coordinates. s = 1 is admitted as a special case
/// (h-map = sign).
class NormSpec {
 public:
  /// `active` holds 0-based coordinate indices; empty means all coordinates.
  NormSpec(int dim, double s, double p, std::vector<int> active = {});

  static NormSpec euclidean(int dim, double p = 2.0) { return NormSpec(dim, 2.0, p); }

  int dim() const { return dim_; }
  double s() const { return s_; }
  double r() const { return r_; }
  double p() const { return p_; }
  /// Conjugate of p; +infinity for p = 1.
  double q() const { return q_; }
  const std::vector<int>& active() const { return active_; }
  bool is_full() const { return static_cast<int>(active_.size()) == dim_; }
  int active_dim() const { return static_cast<int>(active_.size()); }

  double norm(const Vector& x) const;
  double dual_norm(const Vector& y) const;
  /// dual_norm(x - y)^p; +infinity when x - y leaves the active subspace.
  double cost(const Vector& x, const Vector& y) const;

  /// Active coordinates of x.
  Vector restrict(const Vector& x) const;
  /// Vector of R^d with the given active coordinates and zeros elsewhere.
  Vector embed(const Vector& z) const;

  /// Same norm with a different Wasserstein order.
  NormSpec with_order(double p) const { return NormSpec(dim_, s_, p, active_); }

 private:
  int dim_;
  double s_;
  double r_;
  double p_;
  double q_;
  std::vector<int> active_;
};

double dual_norm(const NormSpec& norm, const Vector& y);

/// h(x): the unit dual-norm vector with <x, h(x)> = |x|. Returns zero for
/// |x| = 0. Under s = 1 a zero active coordinate gets the subgradient choice
/// sign(0) = 0 and `warning` (when given) is set.
Vector h_map(const NormSpec& norm, const Vector& x, bool* warning = nullptr);

/// Closed convex state space S.
class SupportSpec {
 public:
  enum class Kind { Whole, Box, HalfSpaces };

  SupportSpec() = default;
  static SupportSpec whole() { return {}; }
  static SupportSpec box(Vector lower, Vector upper);
  /// {x : A x <= b}.
  static SupportSpec half_spaces(Matrix a, Vector b);

  Kind kind() const { return kind_; }
  bool contains(const Vector& x, double tol = 0.0) const;
  bool interior(const Vector& x) const;
  /// Euclidean projection onto S (Dykstra iterations for several half-spaces).
  void project(Vector& x) const;
  bool bounded() const { return kind_ == Kind::Box && lower_.allFinite() && upper_.allFinite(); }
  const Vector& lower() const { return lower_; }
  const Vector& upper() const { return upper_; }
  const Matrix& normals() const { return normals_; }
  const Vector& offsets() const { return offsets_; }

 private:
  Kind kind_ = Kind::Whole;
  Vector lower_;
  Vector upper_;
  Matrix normals_;
  Vector offsets_;
};

/// Exact optimal transport cost sum pi_ij cost_ij between two weight
/// vectors; infinite entries are forbidden arcs. Returns +infinity when no
/// finite-cost coupling exists. Also returns the optimal coupling if asked.
double optimal_transport(const Matrix& cost, std::span<const double> source,
                         std::span<const double> target, Matrix* coupling = nullptr);

/// W_p(mu, nu) for the transport cost |x - y|_*^p.
double wasserstein_distance(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                            const NormSpec& norm);

// ---------------------------------------------------------------------------
// Serialization: CSV has one atom per row with the weight in the last column;
// JSON is {"atoms": [[...]], "weights": [...]}.

DiscreteMeasure measure_from_csv(std::istream& in);
void measure_to_csv(std::ostream& out, const DiscreteMeasure& mu);
DiscreteMeasure measure_from_json(const nlohmann::json& j);
nlohmann::json measure_to_json(const DiscreteMeasure& mu);
/// Dispatches on the extension (.csv / .json).
DiscreteMeasure load_measure(const std::string& path);

}  // namespace wdro
