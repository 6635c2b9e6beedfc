// Dual oracle for V(delta, a): per-atom inner suprema by multi-start local
// ascent, outer multiplier by a safeguarded cutting-plane search on the
// convex dual function.

#include "wdro/oracle.hpp"

#include "wdro/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <random>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace wdro {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kUnboundedValue = 1e200;

struct AtomSolution {
  Vector z;             // active displacement y - x
  double payoff = 0.0;  // augmented payoff f(y) + <eta, Phi(y)>
  double raw = 0.0;     // f(y)
  double cost = 0.0;
  double objective = 0.0;  // payoff - lambda cost
  bool unbounded = false;
};

struct Sweep {
  double lambda = 0.0;
  double dual = kInf;
  double cost = 0.0;
  double payoff = 0.0;
  double raw = 0.0;
  bool unbounded = false;
  std::vector<AtomSolution> atoms;
};

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

struct OracleCache::Impl {
  double lambda_hint = 0.0;
  std::vector<Vector> warm;
};

OracleCache::OracleCache() : impl_(std::make_unique<Impl>()) {}
OracleCache::~OracleCache() = default;
OracleCache::OracleCache(OracleCache&&) noexcept = default;
OracleCache& OracleCache::operator=(OracleCache&&) noexcept = default;

int oracle_threads() {
  int n = 1;
#ifdef _OPENMP
  n = omp_get_max_threads();
#endif
  if (const char* env = std::getenv("WDRO_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) n = std::min(n, cap);
  }
  return std::max(n, 1);
}

namespace {

class DualProblem {
 public:
  DualProblem(const LossModel& loss, const DiscreteMeasure& mu, const NormSpec& norm, double delta,
              const Vector& a, const SupportSpec& support, const OracleOptions& options,
              const ConstraintSet* constraints, const Vector& eta)
      : loss_(loss), mu_(mu), norm_(norm), support_(support), opt_(options), a_(a),
        constraints_(constraints), eta_(eta), delta_(delta), p_(norm.p()),
        dp_(std::pow(delta, norm.p())), m_(norm.active_dim()) {
    const std::size_t n = mu.size();
    base_grad_.resize(n);
    lipschitz_ = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      base_grad_[i] = norm_.restrict(augmented_grad(mu.atom(i)));
      lipschitz_ = std::max(lipschitz_, lp_norm(base_grad_[i], norm_.s()));
    }
  }

  double dp() const { return dp_; }
  double lipschitz() const { return lipschitz_; }

  Vector point(std::size_t i, const Vector& z) const { return mu_.atom(i) + norm_.embed(z); }

  double augmented_value(const Vector& y, double* raw) const {
    const double f = loss_.value(y, a_);
    if (raw != nullptr) *raw = f;
    if (constraints_ == nullptr || eta_.size() == 0) return f;
    return f + eta_.dot(constraints_->values(y));
  }

  Vector augmented_grad(const Vector& y) const {
    Vector g = loss_.grad_x(y, a_);
    if (constraints_ != nullptr && eta_.size() > 0) g += constraints_->gradients(y) * eta_;
    return g;
  }

  double cost_of(const Vector& z) const { return std::pow(lp_norm(z, norm_.r()), p_); }

  AtomSolution solve_atom(std::size_t i, double lambda, const Vector* warm) const {
    const Vector& x = mu_.atom(i);
    auto objective = [&](const Vector& z, Vector& grad) {
      const Vector y = point(i, z);
      const double f = augmented_value(y, nullptr);
      const double zn = lp_norm(z, norm_.r());
      grad = -norm_.restrict(augmented_grad(y));
      if (zn > 0.0) grad += lambda * p_ * std::pow(zn, p_ - 1.0) * lp_direction(z, norm_.r());
      return -(f - lambda * std::pow(zn, p_));
    };
    QuasiNewtonOptions qn;
    qn.max_iter = 300;
    qn.grad_tol = 1e-11 * (1.0 + lipschitz_);
    qn.divergence_radius = 1e12;
    if (support_.kind() != SupportSpec::Kind::Whole) {
      qn.project = [&](Vector& z) {
        Vector y = point(i, z);
        support_.project(y);
        z = norm_.restrict(y - x);
      };
    }
    auto value_at = [&](const Vector& z) {
      Vector g;
      return -objective(z, g);
    };

    // candidate starts
    std::vector<Vector> forced;
    std::vector<Vector> pool;
    forced.push_back(Vector::Zero(m_));
    if (warm != nullptr && warm->size() == m_) forced.push_back(*warm);
    const Vector& g = base_grad_[i];
    const double gnorm = lp_norm(g, norm_.s());
    const Vector hdir = lp_direction(g, norm_.s());
    const double w = mu_.weight(i);
    double rho_local = 0.0;
    double rho_global = 0.0;
    if (p_ > 1.0 && lambda > 0.0) {
      rho_local = std::pow(gnorm / (p_ * lambda), 1.0 / (p_ - 1.0));
      rho_global = std::pow(lipschitz_ / (p_ * lambda), 1.0 / (p_ - 1.0));
    }
    const double budget_radius = delta_ * std::pow(w, -1.0 / p_);
    const double radius = opt_.grid_span * std::max({rho_global, delta_, budget_radius});
    if (rho_local > 0.0) forced.push_back(rho_local * hdir);
    for (double t : {delta_, budget_radius}) {
      if (gnorm > 0.0) {
        pool.push_back(t * hdir);
        pool.push_back(-t * hdir);
      }
    }
    if (m_ == 1) {
      for (double f : {0.25, 0.5, 0.75, 1.0}) {
        pool.push_back(Vector::Constant(1, f * radius));
        pool.push_back(Vector::Constant(1, -f * radius));
      }
    } else {
      std::vector<Vector> dirs;
      if (gnorm > 0.0) {
        dirs.push_back(hdir);
        dirs.push_back(-hdir);
      }
      std::mt19937_64 rng(splitmix(opt_.seed ^ splitmix(i + 1)));
      std::normal_distribution<double> normal;
      for (int k = 0; k < opt_.multistart; ++k) {
        Vector u(m_);
        for (Eigen::Index j = 0; j < m_; ++j) u[j] = normal(rng);
        const double un = lp_norm(u, norm_.r());
        if (un > 0.0) dirs.push_back(u / un);
      }
      for (const auto& u : dirs) {
        for (double f : {0.2, 0.5, 1.0}) pool.push_back(f * radius * u);
      }
    }
    if (support_.bounded() && m_ <= 6) {
      const int corners = 1 << m_;
      for (int c = 0; c < corners; ++c) {
        Vector y = x;
        for (int j = 0; j < m_; ++j) {
          const int coord = norm_.active()[static_cast<std::size_t>(j)];
          y[coord] = (c >> j) & 1 ? support_.upper()[coord] : support_.lower()[coord];
        }
        pool.push_back(norm_.restrict(y - x));
      }
    }
    // rank the pool by objective value; ascend from the forced starts and the best of the pool
    std::vector<std::pair<double, std::size_t>> ranked;
    ranked.reserve(pool.size());
    for (std::size_t k = 0; k < pool.size(); ++k) {
      Vector zk = pool[k];
      if (qn.project) qn.project(zk);
      pool[k] = zk;
      const double v = value_at(zk);
      ranked.emplace_back(std::isfinite(v) ? -v : kInf, k);
    }
    std::sort(ranked.begin(), ranked.end());
    std::vector<Vector> starts = forced;
    const std::size_t extra =
        static_cast<std::size_t>(std::max(2, opt_.multistart - static_cast<int>(forced.size())));
    for (std::size_t t = 0; t < ranked.size() && t < extra; ++t) starts.push_back(pool[ranked[t].second]);

    AtomSolution best;
    best.objective = -kInf;
    std::vector<Vector> found;
    for (const auto& z0 : starts) {
      bool seen = false;
      for (const auto& zf : found) {
        if ((zf - z0).norm() <= 1e-9 * (1.0 + zf.norm())) {
          seen = true;
          break;
        }
      }
      if (seen) continue;
      const QuasiNewtonResult r = minimize_bfgs(objective, z0, qn);
      if (r.diverged || !std::isfinite(r.value) || -r.value > kUnboundedValue) {
        best.unbounded = true;
        best.objective = kInf;
        best.z = r.x;
        return best;
      }
      found.push_back(r.x);
      const double obj = -r.value;
      if (obj > best.objective) {
        best.objective = obj;
        best.z = r.x;
      }
    }
    const Vector y = point(i, best.z);
    best.payoff = augmented_value(y, &best.raw);
    best.cost = cost_of(best.z);
    best.objective = best.payoff - lambda * best.cost;
    return best;
  }

  Sweep sweep(double lambda, std::vector<Vector>& warm) const {
    const std::size_t n = mu_.size();
    Sweep s;
    s.lambda = lambda;
    s.atoms.resize(n);
    const bool have_warm = warm.size() == n;
    const int threads = oracle_threads();
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(threads) if (threads > 1 && n >= 16)
#endif
    for (long i = 0; i < static_cast<long>(n); ++i) {
      const auto u = static_cast<std::size_t>(i);
      s.atoms[u] = solve_atom(u, lambda, have_warm ? &warm[u] : nullptr);
    }
    (void)threads;
    s.dual = lambda * dp_;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& at = s.atoms[i];
      if (at.unbounded) {
        s.unbounded = true;
        s.dual = kInf;
        continue;
      }
      s.dual += mu_.weight(i) * at.objective;
      s.cost += mu_.weight(i) * at.cost;
      s.payoff += mu_.weight(i) * at.payoff;
      s.raw += mu_.weight(i) * at.raw;
    }
    if (s.unbounded) {
      s.dual = kInf;
      s.cost = kInf;
    } else {
      warm.resize(n);
      for (std::size_t i = 0; i < n; ++i) warm[i] = s.atoms[i].z;
    }
    return s;
  }

  // slope of the dual function at the sweep's multiplier
  double slope(const Sweep& s) const { return s.unbounded ? -kInf : dp_ - s.cost; }

 private:
  const LossModel& loss_;
  const DiscreteMeasure& mu_;
  const NormSpec& norm_;
  const SupportSpec& support_;
  const OracleOptions& opt_;
  Vector a_;
  const ConstraintSet* constraints_;
  Vector eta_;
  double delta_;
  double p_;
  double dp_;
  Eigen::Index m_;
  double lipschitz_ = 0.0;
  std::vector<Vector> base_grad_;
};

void check_inputs(const LossModel& loss, const DiscreteMeasure& mu, const NormSpec& norm, double delta,
                  const Vector& a) {
  if (!(delta >= 0.0) || !std::isfinite(delta)) throw ValidationError("radius delta must be finite and >= 0");
  if (mu.dim() != loss.state_dim() || norm.dim() != loss.state_dim()) {
    throw ValidationError("loss '" + loss.name() + "', measure and norm disagree on the state dimension");
  }
  if (a.size() != loss.action_dim()) throw ValidationError("action dimension does not match loss '" + loss.name() + "'");
}

// Losses of exponential type (growth = inf) beat every |x|^p on an unbounded
// state space; a local ascent would settle on a finite local maximum instead.
void check_growth_order(const LossModel& loss, const SupportSpec& support, double delta) {
  if (delta > 0.0 && !std::isfinite(loss.growth()) && !support.bounded()) {
    throw NumericalError("radius-order mismatch: loss '" + loss.name() +
                         "' grows faster than any power of |x| on an unbounded state space, so the inner "
                         "supremum is infinite for every multiplier; restrict the support to a box");
  }
}

DualEvalResult expectation_result(const LossModel& loss, const DiscreteMeasure& mu, const Vector& a,
                                  const OracleOptions& options) {
  DualEvalResult r;
  r.expectation = base_value(loss, mu, a);
  r.value = r.expectation;
  r.primal_value = r.expectation;
  r.lambda_star = kInf;
  r.displaced_atoms = mu.atoms();
  r.worst_case = mu;
  r.seed = options.seed;
  return r;
}

DualEvalResult solve_dual(const DualProblem& prob, const LossModel& loss, const DiscreteMeasure& mu,
                          const Vector& a, const OracleOptions& options, OracleCache* cache) {
  DualEvalResult out;
  out.seed = options.seed;
  out.expectation = base_value(loss, mu, a);

  std::vector<Vector> warm;
  double lambda0 = 0.0;
  if (cache != nullptr) {
    warm = cache->impl().warm;
    lambda0 = cache->impl().lambda_hint;
  }
  const bool hinted = lambda0 > 0.0;
  if (!hinted) {
    lambda0 = std::max(prob.lipschitz(), 1e-6 * (1.0 + std::abs(out.expectation)));
  }
  const double factor = hinted ? 2.0 : 4.0;

  int iterations = 0;
  std::optional<Sweep> lo;
  std::optional<Sweep> hi;
  {
    Sweep s = prob.sweep(lambda0, warm);
    ++iterations;
    if (prob.slope(s) >= 0.0) {
      hi = std::move(s);
    } else {
      lo = std::move(s);
    }
  }
  if (hi) {
    const double floor = 1e-12 * hi->lambda;
    double lam = hi->lambda;
    while (!lo) {
      lam /= factor;
      if (lam < floor) break;
      Sweep s = prob.sweep(lam, warm);
      ++iterations;
      if (prob.slope(s) >= 0.0) {
        hi = std::move(s);
      } else {
        lo = std::move(s);
      }
    }
  } else {
    double lam = lo->lambda;
    for (int k = 0; !hi; ++k) {
      if (k > 120) {
        if (lo->unbounded) {
          throw NumericalError(
              "radius-order mismatch: the inner supremum stays unbounded for every multiplier, so the "
              "loss grows at least like |x|^p");
        }
        throw NumericalError("dual multiplier bracket could not be closed");
      }
      lam *= factor;
      Sweep s = prob.sweep(lam, warm);
      ++iterations;
      if (prob.slope(s) >= 0.0) {
        hi = std::move(s);
      } else {
        lo = std::move(s);
      }
    }
  }

  // cutting-plane search on the convex dual with bisection safeguards
  int same_side = 0;
  int last_side = 0;
  while (lo && iterations < options.max_lambda_iter) {
    const double best = std::min(lo->dual, hi->dual);
    double lam_next;
    const double width = hi->lambda - lo->lambda;
    if (width <= 1e-15 * hi->lambda) break;
    if (!lo->unbounded) {
      const double slo = prob.slope(*lo);
      const double shi = prob.slope(*hi);
      const double lam_c = (hi->dual - lo->dual + slo * lo->lambda - shi * hi->lambda) / (slo - shi);
      const double lower_bound = lo->dual + slo * (lam_c - lo->lambda);
      if (best - lower_bound <= 1e-3 * options.tolerance * (1.0 + std::abs(best))) break;
      lam_next = lam_c;
      if (same_side >= 2 || !(lam_next > lo->lambda + 0.01 * width && lam_next < hi->lambda - 0.01 * width)) {
        lam_next = 0.5 * (lo->lambda + hi->lambda);
        same_side = 0;
      }
    } else {
      lam_next = lo->lambda > 0.0 && hi->lambda / lo->lambda > 4.0 ? std::sqrt(lo->lambda * hi->lambda)
                                                                     : 0.5 * (lo->lambda + hi->lambda);
    }
    Sweep s = prob.sweep(lam_next, warm);
    ++iterations;
    const int side = prob.slope(s) >= 0.0 ? 1 : -1;
    same_side = side == last_side ? same_side + 1 : 1;
    last_side = side;
    if (side > 0) {
      hi = std::move(s);
    } else {
      lo = std::move(s);
    }
  }

  out.lambda_iterations = iterations;
  const double dp = prob.dp();
  std::vector<Vector> atoms;
  std::vector<double> weights;
  if (!lo || lo->unbounded) {
    out.value = hi->dual;
    out.lambda_star = hi->lambda;
    out.primal_value = hi->raw;
    out.transport_cost = hi->cost;
    for (std::size_t i = 0; i < mu.size(); ++i) {
      atoms.push_back(prob.point(i, hi->atoms[i].z));
      weights.push_back(mu.weight(i));
    }
  } else {
    const double theta = lo->cost > hi->cost ? std::clamp((lo->cost - dp) / (lo->cost - hi->cost), 0.0, 1.0) : 1.0;
    out.value = std::min(lo->dual, hi->dual);
    out.lambda_star = lo->dual < hi->dual ? lo->lambda : hi->lambda;
    out.primal_value = (1.0 - theta) * lo->raw + theta * hi->raw;
    out.transport_cost = (1.0 - theta) * lo->cost + theta * hi->cost;
    for (std::size_t i = 0; i < mu.size(); ++i) {
      atoms.push_back(prob.point(i, hi->atoms[i].z));
      weights.push_back(theta * mu.weight(i));
      atoms.push_back(prob.point(i, lo->atoms[i].z));
      weights.push_back((1.0 - theta) * mu.weight(i));
    }
  }
  for (std::size_t i = 0; i < mu.size(); ++i) out.displaced_atoms.push_back(prob.point(i, hi->atoms[i].z));
  {
    // renormalize against rounding before building the measure
    double total = 0.0;
    for (double w : weights) total += w;
    for (double& w : weights) w /= total;
    out.worst_case = DiscreteMeasure(std::move(atoms), std::move(weights));
  }
  out.gap = out.value - out.primal_value;
  if (cache != nullptr) {
    cache->impl().lambda_hint = out.lambda_star;
    std::vector<Vector> z;
    for (const auto& at : hi->atoms) z.push_back(at.z);
    cache->impl().warm = std::move(z);
  }
  return out;
}

}  // namespace

nlohmann::json dual_result_to_json(const DualEvalResult& r) {
  auto vec = [](const Vector& v) {
    nlohmann::json out = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
  };
  nlohmann::json j;
  j["value"] = r.value;
  j["lambda_star"] = std::isinf(r.lambda_star) ? nlohmann::json("inf") : nlohmann::json(r.lambda_star);
  j["primal_value"] = r.primal_value;
  j["gap"] = r.gap;
  j["expectation"] = r.expectation;
  j["transport_cost"] = r.transport_cost;
  j["seed"] = r.seed;
  j["lambda_iterations"] = r.lambda_iterations;
  nlohmann::json atoms = nlohmann::json::array();
  for (const auto& y : r.displaced_atoms) atoms.push_back(vec(y));
  j["displaced_atoms"] = atoms;
  if (r.eta.size() > 0) j["eta"] = vec(r.eta);
  return j;
}

DualEvalResult eval_dual(const LossModel& loss, const DiscreteMeasure& mu, const NormSpec& norm, double delta,
                         const Vector& a, const SupportSpec& support, const OracleOptions& options,
                         OracleCache* cache) {
  check_inputs(loss, mu, norm, delta, a);
  check_growth_order(loss, support, delta);
  if (delta == 0.0) return expectation_result(loss, mu, a, options);
  DualProblem prob(loss, mu, norm, delta, a, support, options, nullptr, Vector());
  return solve_dual(prob, loss, mu, a, options, cache);
}

DualEvalResult eval_dual_constrained(const LossModel& loss, const DiscreteMeasure& mu, const NormSpec& norm,
                                     double delta, const Vector& a, const ConstraintSet& constraints,
                                     const SupportSpec& support, const OracleOptions& options) {
  check_inputs(loss, mu, norm, delta, a);
  check_growth_order(loss, support, delta);
  if (constraints.empty()) return eval_dual(loss, mu, norm, delta, a, support, options);
  if (constraints.state_dim() != loss.state_dim()) throw ValidationError("constraint dimension mismatch");
  if (delta == 0.0) {
    DualEvalResult r = expectation_result(loss, mu, a, options);
    r.eta = Vector::Zero(static_cast<Eigen::Index>(constraints.size()));
    return r;
  }
  const auto m = static_cast<Eigen::Index>(constraints.size());
  // least-squares multiplier as the starting point
  Matrix gram = Matrix::Zero(m, m);
  Vector rhs = Vector::Zero(m);
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const Matrix gp = constraints.gradients(mu.atom(i));
    gram += mu.weight(i) * gp.transpose() * gp;
    rhs -= mu.weight(i) * gp.transpose() * loss.grad_x(mu.atom(i), a);
  }
  Vector eta = gram.ldlt().solve(rhs);
  if (!eta.allFinite()) eta.setZero();
  OracleCache cache;
  auto value_at = [&](const Vector& e) {
    DualProblem prob(loss, mu, norm, delta, a, support, options, &constraints, e);
    return solve_dual(prob, loss, mu, a, options, &cache).value;
  };
  for (int sweep = 0; sweep < (m == 1 ? 1 : 12); ++sweep) {
    const Vector before = eta;
    for (Eigen::Index j = 0; j < m; ++j) {
      auto fj = [&](double t) {
        Vector e = eta;
        e[j] = t;
        return value_at(e);
      };
      const double scale = 1.0 + std::abs(eta[j]);
      const ScalarMin r = golden_section_unbounded(fj, eta[j], 0.05 * scale, 1e-7 * scale, 120);
      eta[j] = r.x;
    }
    if ((eta - before).lpNorm<Eigen::Infinity>() <= 1e-7 * (1.0 + eta.lpNorm<Eigen::Infinity>())) break;
  }
  DualProblem prob(loss, mu, norm, delta, a, support, options, &constraints, eta);
  DualEvalResult r = solve_dual(prob, loss, mu, a, options, &cache);
  r.eta = eta;
  return r;
}

double eval_primal_lowerbound(const LossModel& loss, const DiscreteMeasure& mu, const NormSpec& norm,
                              double delta, const Vector& a, const SupportSpec& support) {
  check_inputs(loss, mu, norm, delta, a);
  if (!(norm.p() > 1.0)) throw ValidationError("the first-order shift needs p > 1");
  const double q = norm.q();
  const std::size_t n = mu.size();
  std::vector<Vector> g(n);
  double lq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    g[i] = loss.grad_x(mu.atom(i), a);
    lq += mu.weight(i) * std::pow(norm.norm(g[i]), q);
  }
  if (delta == 0.0 || lq == 0.0) return base_value(loss, mu, a);
  const double scale = std::pow(lq, 1.0 / q - 1.0);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double gn = norm.norm(g[i]);
    Vector y = mu.atom(i);
    if (gn > 0.0) y += delta * scale * std::pow(gn, q - 1.0) * h_map(norm, g[i]);
    if (support.kind() != SupportSpec::Kind::Whole) support.project(y);
    acc += mu.weight(i) * loss.value(y, a);
  }
  return acc;
}

// ---------------------------------------------------------------------------

namespace {

struct RobustEval {
  Vector a;
  double value = 0.0;
  Vector grad;
  Matrix hess;
};

RobustEval robust_eval(const LossModel& loss, const DiscreteMeasure& mu, const NormSpec& norm, double delta,
                       const Vector& a, const SupportSpec& support, const OracleOptions& opt,
                       OracleCache& cache) {
  const DualEvalResult r = eval_dual(loss, mu, norm, delta, a, support, opt, &cache);
  RobustEval e;
  e.a = a;
  e.value = r.value;
  e.grad = Vector::Zero(a.size());
  e.hess = Matrix::Zero(a.size(), a.size());
  const DiscreteMeasure& nu = *r.worst_case;
  for (std::size_t i = 0; i < nu.size(); ++i) {
    e.grad += nu.weight(i) * loss.grad_a(nu.atom(i), a);
    e.hess += nu.weight(i) * loss.hess_a(nu.atom(i), a);
  }
  return e;
}

bool positive_definite(const Matrix& h) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (h + h.transpose()));
  if (eig.info() != Eigen::Success) return false;
  const Vector ev = eig.eigenvalues();
  return ev.minCoeff() > 1e-12 * std::max(1.0, ev.cwiseAbs().maxCoeff());
}

}  // namespace

OptimizerCertificate robust_optimize(const LossModel& loss, const DiscreteMeasure& mu, const NormSpec& norm,
                                     double delta, const Vector& a0, const SupportSpec& support,
                                     const RobustOptions& options) {
  check_inputs(loss, mu, norm, delta, a0);
  if (delta == 0.0) {
    SolveOptions so;
    so.tolerance = options.grad_tol;
    return solve_base_problem(loss, mu, a0, so);
  }
  OracleCache cache;
  const auto k = a0.size();
  auto evaluate = [&](const Vector& a) { return robust_eval(loss, mu, norm, delta, a, support, options.oracle, cache); };

  RobustEval cur = evaluate(a0);
  int iterations = 0;
  bool converged = false;
  bool use_fd = false;
  for (; iterations < options.max_newton; ++iterations) {
    if (cur.grad.norm() <= options.grad_tol) {
      converged = true;
      break;
    }
    Matrix jac = cur.hess;
    if (use_fd || !positive_definite(jac)) {
      jac.resize(k, k);
      for (Eigen::Index j = 0; j < k; ++j) {
        const double h = 1e-5 * (1.0 + std::abs(cur.a[j]));
        Vector ap = cur.a, am = cur.a;
        ap[j] += h;
        am[j] -= h;
        jac.col(j) = (evaluate(ap).grad - evaluate(am).grad) / (2.0 * h);
      }
      jac = 0.5 * (jac + jac.transpose());
      if (!positive_definite(jac)) break;
    }
    Vector step = -jac.ldlt().solve(cur.grad);
    // a near-singular Jacobian (kinks in a) must not throw the iterate far
    // away: far actions would also seed the warm-start cache with junk
    const double cap = 1.0 + cur.a.lpNorm<Eigen::Infinity>();
    if (!(step.norm() <= cap)) step *= cap / step.norm();
    if (!step.allFinite()) break;
    bool accepted = false;
    for (double t = 1.0; t >= 1.0 / 256.0; t *= 0.5) {
      RobustEval trial;
      try {
        trial = evaluate(cur.a + t * step);
      } catch (const NumericalError&) {
        continue;
      }
      if (trial.grad.norm() < (1.0 - 1e-4 * t) * cur.grad.norm()) {
        if (trial.grad.norm() > 0.5 * cur.grad.norm()) use_fd = true;
        cur = std::move(trial);
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (use_fd) break;
      use_fd = true;
    }
  }

  OptimizerCertificate cert;
  cert.source = OptimizerCertificate::Source::Solved;
  if (converged) {
    cert.action = cur.a;
    cert.value = cur.value;
    cert.residual = cur.grad.norm();
    cert.iterations = iterations;
    return cert;
  }

  // compass pattern search on the value
  Vector a = cur.a;
  double v = cur.value;
  double h = std::max(1e-3, 1e-2 * a.lpNorm<Eigen::Infinity>());
  const double h_min = 1e-9 * (1.0 + a.lpNorm<Eigen::Infinity>());
  int evals = 0;
  std::vector<std::pair<Vector, double>> trace;
  while (h > h_min) {
    bool improved = false;
    for (Eigen::Index j = 0; j < k && !improved; ++j) {
      for (double sgn : {1.0, -1.0}) {
        Vector trial = a;
        trial[j] += sgn * h;
        const double vt = eval_dual(loss, mu, norm, delta, trial, support, options.oracle, &cache).value;
        if (++evals > options.max_pattern_evals) {
          std::ostringstream os;
          os.precision(17);
          os << "robust_optimize did not converge at delta = " << delta << "; last iterates:";
          for (std::size_t t = trace.size() > 5 ? trace.size() - 5 : 0; t < trace.size(); ++t) {
            os << " (a0 = " << trace[t].first[0] << ", V = " << trace[t].second << ")";
          }
          throw NumericalError(os.str());
        }
        if (vt < v - 1e-15 * (1.0 + std::abs(v))) {
          a = trial;
          v = vt;
          improved = true;
          trace.emplace_back(a, v);
          break;
        }
      }
    }
    if (!improved) h *= 0.5;
  }
  cert.action = a;
  cert.value = v;
  cert.residual = h;
  cert.iterations = iterations + evals;
  return cert;
}

// ---------------------------------------------------------------------------

namespace {

void check_grid(std::span<const double> deltas, const OracleOptions& opt) {
  if (deltas.size() < 3) throw ValidationError("slope estimation needs at least 3 radii");
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    if (!(deltas[i] > 0.0)) throw ValidationError("radii must be positive");
    if (i > 0 && !(deltas[i] < deltas[i - 1])) throw ValidationError("radii must be strictly decreasing");
  }
  if (!(10.0 * opt.tolerance <= deltas.back())) {
    throw ValidationError("oracle tolerance must be at least 10x smaller than the smallest radius");
  }
}

Vector extrapolate(std::span<const double> deltas, const std::vector<Vector>& secants) {
  const auto k = secants.front().size();
  Vector out(k);
  std::vector<double> y(deltas.size());
  for (Eigen::Index j = 0; j < k; ++j) {
    for (std::size_t i = 0; i < deltas.size(); ++i) y[i] = secants[i][j];
    out[j] = neville_to_zero(deltas, y).back();
  }
  return out;
}

}  // namespace

SlopeEstimate fd_value_slope(const LossModel& loss, const DiscreteMeasure& mu, const NormSpec& norm,
                             const OptimizerCertificate& a_star, std::span<const double> deltas,
                             const SupportSpec& support, const SlopeOptions& options) {
  check_inputs(loss, mu, norm, 0.0, a_star.action);
  check_grid(deltas, options.robust.oracle);
  SlopeEstimate est;
  est.base_action = a_star.action;
  est.base_value = base_value(loss, mu, a_star.action);
  Vector a = a_star.action;
  OracleCache cache;
  for (double d : deltas) {
    double v;
    if (options.fixed_action) {
      v = eval_dual(loss, mu, norm, d, a_star.action, support, options.robust.oracle, &cache).value;
    } else {
      const OptimizerCertificate c = robust_optimize(loss, mu, norm, d, a, support, options.robust);
      a = c.action;
      v = c.value;
    }
    est.deltas.push_back(d);
    est.values.push_back(v);
    est.actions.push_back(a);
    est.secants.push_back(Vector::Constant(1, (v - est.base_value) / d));
  }
  // monotone in delta, including delta = 0
  const double slack = 10.0 * options.robust.oracle.tolerance;
  double prev = est.base_value;
  for (std::size_t i = est.values.size(); i-- > 0;) {
    if (est.values[i] < prev - slack * (1.0 + std::abs(prev))) {
      std::ostringstream os;
      os.precision(17);
      os << "V(delta) is not monotone along the grid (V(" << est.deltas[i] << ") = " << est.values[i]
         << " < " << prev << "); tighten the oracle tolerance";
      throw NumericalError(os.str());
    }
    prev = std::max(prev, est.values[i]);
  }
  est.estimate = extrapolate(deltas, est.secants);
  return est;
}

SlopeEstimate fd_optimizer_slope(const LossModel& loss, const DiscreteMeasure& mu, const NormSpec& norm,
                                 const OptimizerCertificate& a_star, std::span<const double> deltas,
                                 const SupportSpec& support, const SlopeOptions& options) {
  check_inputs(loss, mu, norm, 0.0, a_star.action);
  check_grid(deltas, options.robust.oracle);
  SlopeEstimate est;
  est.base_action = a_star.action;
  est.base_value = base_value(loss, mu, a_star.action);
  Vector a = a_star.action;
  for (double d : deltas) {
    const OptimizerCertificate c = robust_optimize(loss, mu, norm, d, a, support, options.robust);
    a = c.action;
    est.deltas.push_back(d);
    est.values.push_back(c.value);
    est.actions.push_back(c.action);
    est.secants.push_back((c.action - a_star.action) / d);
  }
  // oscillation: successive secant differences alternate in sign without shrinking
  const auto k = a_star.action.size();
  for (Eigen::Index j = 0; j < k; ++j) {
    std::vector<double> diff;
    for (std::size_t i = 1; i < est.secants.size(); ++i) diff.push_back(est.secants[i][j] - est.secants[i - 1][j]);
    const double floor = 1e-6 * (1.0 + std::abs(est.secants.back()[j]));
    bool alternating = diff.size() >= 2;
    for (std::size_t i = 1; i < diff.size(); ++i) {
      alternating = alternating && diff[i] * diff[i - 1] < 0.0;
    }
    if (alternating && std::abs(diff.back()) >= std::abs(diff.front()) && std::abs(diff.back()) > floor) {
      std::ostringstream os;
      os.precision(17);
      os << "optimizer trajectory oscillates in coordinate " << j << "; secants:";
      for (const auto& s : est.secants) os << " " << s[j];
      throw NumericalError(os.str());
    }
  }
  est.estimate = extrapolate(deltas, est.secants);
  return est;
}

}  // namespace wdro
