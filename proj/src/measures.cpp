#include "wdro/measures.hpp"

#include "wdro/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

namespace wdro {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPruneBelow = 1e-15;
}  // namespace

DiscreteMeasure::DiscreteMeasure(std::vector<Vector> atoms, std::vector<double> weights) {
  if (atoms.empty()) throw ValidationError("empty measure");
  if (atoms.size() != weights.size()) {
    throw ValidationError("measure has " + std::to_string(atoms.size()) + " atoms but " +
                          std::to_string(weights.size()) + " weights");
  }
  const Eigen::Index d = atoms.front().size();
  if (d == 0) throw ValidationError("measure atoms must have dimension >= 1");
  double total = 0.0;
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    if (atoms[i].size() != d) throw ValidationError("measure atoms have mixed dimensions");
    if (!atoms[i].allFinite()) {
      throw ValidationError("measure atom " + std::to_string(i) + " has a non-finite coordinate");
    }
    if (!(weights[i] >= 0.0) || !std::isfinite(weights[i])) {
      throw ValidationError("measure weight " + std::to_string(i) + " is negative or not finite");
    }
    total += weights[i];
  }
  // summation error grows with N
  const double tol = 1e-12 + 4.0 * std::numeric_limits<double>::epsilon() * static_cast<double>(atoms.size());
  if (std::abs(total - 1.0) > tol) {
    std::ostringstream os;
    os << std::setprecision(17) << "measure weights sum to " << total << ", expected 1";
    throw ValidationError(os.str());
  }
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    if (weights[i] < kPruneBelow) continue;
    atoms_.push_back(std::move(atoms[i]));
    weights_.push_back(weights[i]);
  }
  if (atoms_.empty()) throw ValidationError("empty measure");
}

Vector DiscreteMeasure::mean() const {
  Vector m = Vector::Zero(dim());
  for (std::size_t i = 0; i < atoms_.size(); ++i) m += weights_[i] * atoms_[i];
  return m;
}

DiscreteMeasure make_empirical(std::span<const Vector> samples) {
  if (samples.empty()) throw ValidationError("empty measure");
  const double w = 1.0 / static_cast<double>(samples.size());
  return DiscreteMeasure(std::vector<Vector>(samples.begin(), samples.end()),
                         std::vector<double>(samples.size(), w));
}

// ---------------------------------------------------------------------------

NormSpec::NormSpec(int dim, double s, double p, std::vector<int> active)
    : dim_(dim), s_(s), r_(conjugate_exponent(s)), p_(p), q_(conjugate_exponent(p)) {
  if (dim < 1) throw ValidationError("norm dimension must be >= 1");
  if (!(s >= 1.0)) throw ValidationError("norm exponent s must be >= 1");
  if (!(p >= 1.0) || std::isinf(p)) throw ValidationError("Wasserstein order p must be in [1, inf)");
  if (active.empty()) {
    active.resize(static_cast<std::size_t>(dim));
    std::iota(active.begin(), active.end(), 0);
  }
  std::sort(active.begin(), active.end());
  active.erase(std::unique(active.begin(), active.end()), active.end());
  for (int i : active) {
    if (i < 0 || i >= dim) {
      throw ValidationError("active coordinate " + std::to_string(i) + " outside 0.." +
                            std::to_string(dim - 1));
    }
  }
  active_ = std::move(active);
}

Vector NormSpec::restrict(const Vector& x) const {
  Vector z(active_.size());
  for (std::size_t k = 0; k < active_.size(); ++k) z[static_cast<Eigen::Index>(k)] = x[active_[k]];
  return z;
}

Vector NormSpec::embed(const Vector& z) const {
  Vector x = Vector::Zero(dim_);
  for (std::size_t k = 0; k < active_.size(); ++k) x[active_[k]] = z[static_cast<Eigen::Index>(k)];
  return x;
}

double NormSpec::norm(const Vector& x) const { return lp_norm(restrict(x), s_); }

double NormSpec::dual_norm(const Vector& y) const {
  if (!is_full()) {
    std::size_t k = 0;
    for (int i = 0; i < dim_; ++i) {
      if (k < active_.size() && active_[k] == i) {
        ++k;
        continue;
      }
      if (y[i] != 0.0) return kInf;
    }
  }
  return lp_norm(restrict(y), r_);
}

double NormSpec::cost(const Vector& x, const Vector& y) const {
  const double n = dual_norm(x - y);
  if (std::isinf(n)) return kInf;
  return p_ == 2.0 ? n * n : std::pow(n, p_);
}

double dual_norm(const NormSpec& norm, const Vector& y) { return norm.dual_norm(y); }

Vector h_map(const NormSpec& norm, const Vector& x, bool* warning) {
  const Vector z = norm.restrict(x);
  if (warning != nullptr) *warning = false;
  if (norm.s() == 1.0 && warning != nullptr && lp_norm(z, 1.0) > 0.0) {
    *warning = (z.array() == 0.0).any();
  }
  return norm.embed(lp_direction(z, norm.s()));
}

// ---------------------------------------------------------------------------

SupportSpec SupportSpec::box(Vector lower, Vector upper) {
  if (lower.size() != upper.size()) throw ValidationError("box bounds have mismatched sizes");
  if ((lower.array() > upper.array()).any()) throw ValidationError("box lower bound exceeds upper bound");
  SupportSpec s;
  s.kind_ = Kind::Box;
  s.lower_ = std::move(lower);
  s.upper_ = std::move(upper);
  return s;
}

SupportSpec SupportSpec::half_spaces(Matrix a, Vector b) {
  if (a.rows() != b.size()) throw ValidationError("half-space normals and offsets mismatch");
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    if (a.row(i).norm() == 0.0) throw ValidationError("half-space with zero normal");
  }
  SupportSpec s;
  s.kind_ = Kind::HalfSpaces;
  s.normals_ = std::move(a);
  s.offsets_ = std::move(b);
  return s;
}

bool SupportSpec::contains(const Vector& x, double tol) const {
  switch (kind_) {
    case Kind::Whole:
      return true;
    case Kind::Box:
      return ((x.array() >= lower_.array() - tol) && (x.array() <= upper_.array() + tol)).all();
    case Kind::HalfSpaces:
      return ((normals_ * x - offsets_).array() <= tol).all();
  }
  return false;
}

bool SupportSpec::interior(const Vector& x) const {
  switch (kind_) {
    case Kind::Whole:
      return true;
    case Kind::Box:
      return ((x.array() > lower_.array()) && (x.array() < upper_.array())).all();
    case Kind::HalfSpaces:
      return ((normals_ * x - offsets_).array() < 0.0).all();
  }
  return false;
}

void SupportSpec::project(Vector& x) const {
  switch (kind_) {
    case Kind::Whole:
      return;
    case Kind::Box:
      x = x.cwiseMax(lower_).cwiseMin(upper_);
      return;
    case Kind::HalfSpaces: {
      const Eigen::Index m = normals_.rows();
      auto project_one = [&](Eigen::Index i, Vector& y) {
        const double viol = normals_.row(i).dot(y) - offsets_[i];
        if (viol > 0.0) y -= (viol / normals_.row(i).squaredNorm()) * normals_.row(i).transpose();
      };
      if (m == 1) {
        project_one(0, x);
        return;
      }
      // Dykstra's alternating projections
      std::vector<Vector> incr(static_cast<std::size_t>(m), Vector::Zero(x.size()));
      for (int sweep = 0; sweep < 10000; ++sweep) {
        const Vector before = x;
        for (Eigen::Index i = 0; i < m; ++i) {
          Vector y = x + incr[static_cast<std::size_t>(i)];
          Vector py = y;
          project_one(i, py);
          incr[static_cast<std::size_t>(i)] = y - py;
          x = py;
        }
        if ((x - before).lpNorm<Eigen::Infinity>() <= 1e-15 * (1.0 + x.lpNorm<Eigen::Infinity>()) &&
            contains(x, 1e-13)) {
          break;
        }
      }
      return;
    }
  }
}

// ---------------------------------------------------------------------------

double wasserstein_distance(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                            const NormSpec& norm) {
  if (mu.dim() != nu.dim() || mu.dim() != norm.dim()) {
    throw ValidationError("wasserstein_distance: dimension mismatch");
  }
  Matrix cost(static_cast<Eigen::Index>(mu.size()), static_cast<Eigen::Index>(nu.size()));
  for (std::size_t i = 0; i < mu.size(); ++i) {
    for (std::size_t j = 0; j < nu.size(); ++j) {
      cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          norm.cost(mu.atom(i), nu.atom(j));
    }
  }
  const double total = optimal_transport(cost, mu.weights(), nu.weights());
  if (std::isinf(total)) return kInf;
  return std::pow(std::max(total, 0.0), 1.0 / norm.p());
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> parse_csv_row(const std::string& line) {
  std::vector<double> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    if (b == std::string::npos) throw ValidationError("empty CSV cell in '" + line + "'");
    const std::string t = cell.substr(b, e - b + 1);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(t, &used);
    } catch (const std::exception&) {
      throw ValidationError("non-numeric CSV cell '" + t + "'");
    }
    if (used != t.size()) throw ValidationError("non-numeric CSV cell '" + t + "'");
    out.push_back(v);
  }
  return out;
}

}  // namespace

DiscreteMeasure measure_from_csv(std::istream& in) {
  std::vector<Vector> atoms;
  std::vector<double> weights;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    // tolerate a header row
    if (first && line.find_first_of("abcdfghijklmnopqrstuvwxyzABCDFGHIJKLMNOPQRSTUVWXYZ_") !=
                     std::string::npos) {
      first = false;
      continue;
    }
    first = false;
    const auto row = parse_csv_row(line);
    if (row.size() < 2) throw ValidationError("CSV row needs at least one coordinate and a weight");
    Vector x(static_cast<Eigen::Index>(row.size() - 1));
    for (std::size_t k = 0; k + 1 < row.size(); ++k) x[static_cast<Eigen::Index>(k)] = row[k];
    atoms.push_back(std::move(x));
    weights.push_back(row.back());
  }
  return DiscreteMeasure(std::move(atoms), std::move(weights));
}

void measure_to_csv(std::ostream& out, const DiscreteMeasure& mu) {
  out << std::setprecision(17);
  for (std::size_t i = 0; i < mu.size(); ++i) {
    for (Eigen::Index k = 0; k < mu.atom(i).size(); ++k) out << mu.atom(i)[k] << ',';
    out << mu.weight(i) << '\n';
  }
}

DiscreteMeasure measure_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("atoms")) {
    throw ValidationError("measure JSON needs an \"atoms\" array");
  }
  const auto& ja = j.at("atoms");
  if (!ja.is_array()) throw ValidationError("measure JSON \"atoms\" must be an array");
  std::vector<Vector> atoms;
  for (const auto& row : ja) {
    if (row.is_number()) {
      atoms.push_back(Vector::Constant(1, row.get<double>()));
      continue;
    }
    if (!row.is_array()) throw ValidationError("measure JSON atom must be a number or an array");
    Vector x(static_cast<Eigen::Index>(row.size()));
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (!row[k].is_number()) throw ValidationError("measure JSON atom coordinate is not a number");
      x[static_cast<Eigen::Index>(k)] = row[k].get<double>();
    }
    atoms.push_back(std::move(x));
  }
  std::vector<double> weights;
  if (j.contains("weights")) {
    for (const auto& w : j.at("weights")) {
      if (!w.is_number()) throw ValidationError("measure JSON weight is not a number");
      weights.push_back(w.get<double>());
    }
  } else {
    return make_empirical(atoms);
  }
  return DiscreteMeasure(std::move(atoms), std::move(weights));
}

nlohmann::json measure_to_json(const DiscreteMeasure& mu) {
  nlohmann::json atoms = nlohmann::json::array();
  for (const auto& a : mu.atoms()) atoms.push_back(std::vector<double>(a.data(), a.data() + a.size()));
  return {{"atoms", atoms}, {"weights", mu.weights()}};
}

DiscreteMeasure load_measure(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open measure file '" + path + "'");
  const auto dot = path.rfind('.');
  const std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  if (ext == "json") {
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("invalid measure JSON '" + path + "': " + e.what());
    }
    return measure_from_json(j);
  }
  return measure_from_csv(in);
}

}  // namespace wdro
