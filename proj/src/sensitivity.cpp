#include "wdro/sensitivity.hpp"

#include "wdro/error.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace wdro {

namespace {

constexpr double kConditionCutoff = 1e12;
constexpr double kZeroRelative = 1e-12;

void require_p_above_one(const NormSpec& norm) {
  if (!(norm.p() > 1.0)) {
    throw ValidationError(
        "p must exceed 1: for p = 1 the first-order formula may fail (f = x^2, mu = delta_0, "
        "S = [-1,1] has V(delta) = delta while the gradient formula gives 0)");
  }
}

void require_dims(const LossModel& loss, const DiscreteMeasure& mu, const NormSpec& norm, const Vector& a) {
  if (mu.dim() != loss.state_dim() || norm.dim() != loss.state_dim()) {
    throw ValidationError("loss '" + loss.name() + "', measure and norm disagree on the state dimension");
  }
  if (a.size() != loss.action_dim()) {
    throw ValidationError("action dimension does not match loss '" + loss.name() + "'");
  }
}

double gradient_lq(const LossModel& loss, const DiscreteMeasure& mu, const NormSpec& norm, const Vector& a) {
  const double q = norm.q();
  double acc = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    acc += mu.weight(i) * std::pow(norm.norm(loss.grad_x(mu.atom(i), a)), q);
  }
  return std::pow(acc, 1.0 / q);
}

}  // namespace

nlohmann::json report_to_json(const SensitivityReport& r) {
  auto vec = [](const Vector& v) {
    nlohmann::json out = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
  };
  nlohmann::json j;
  j["upsilon"] = r.upsilon;
  j["p"] = r.p;
  j["q"] = r.q;
  j["action"] = vec(r.action);
  j["optimizer_index"] = r.optimizer_index;
  j["gradient_lq_norm"] = r.gradient_lq_norm;
  if (r.beth) {
    j["beth"] = vec(*r.beth);
    nlohmann::json h = nlohmann::json::array();
    for (Eigen::Index i = 0; i < r.hessian.rows(); ++i) h.push_back(vec(r.hessian.row(i).transpose()));
    j["hessian"] = h;
    j["hessian_condition"] = r.hessian_condition;
    j["beth_numerator"] = vec(r.beth_numerator);
    j["zero_gradient_atoms"] = r.zero_gradient_atoms;
  }
  if (r.h_map_warning) j["h_map_warning"] = true;
  if (r.unconstrained_upsilon) {
    j["lambda_star"] = vec(r.lambda_star);
    j["unconstrained_upsilon"] = *r.unconstrained_upsilon;
  }
  return j;
}

SensitivityReport upsilon(const LossModel& loss, const DiscreteMeasure& mu, const NormSpec& norm,
                          std::span<const OptimizerCertificate> optimizers) {
  require_p_above_one(norm);
  if (optimizers.empty()) throw ValidationError("upsilon needs at least one optimizer");
  SensitivityReport rep;
  rep.p = norm.p();
  rep.q = norm.q();
  rep.upsilon = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < optimizers.size(); ++k) {
    require_dims(loss, mu, norm, optimizers[k].action);
    const double v = gradient_lq(loss, mu, norm, optimizers[k].action);
    if (v < rep.upsilon) {
      rep.upsilon = v;
      rep.optimizer_index = k;
      rep.action = optimizers[k].action;
    }
  }
  rep.gradient_lq_norm = rep.upsilon;
  return rep;
}

SensitivityReport beth(const LossModel& loss, const DiscreteMeasure& mu, const NormSpec& norm,
                       const OptimizerCertificate& a_star) {
  require_p_above_one(norm);
  const Vector& a = a_star.action;
  require_dims(loss, mu, norm, a);
  const double q = norm.q();
  const std::size_t n = mu.size();
  const int k = loss.action_dim();

  std::vector<Vector> grads(n);
  std::vector<double> gnorm(n);
  double gmax = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    grads[i] = loss.grad_x(mu.atom(i), a);
    gnorm[i] = norm.norm(grads[i]);
    gmax = std::max(gmax, gnorm[i]);
  }

  SensitivityReport rep;
  rep.p = norm.p();
  rep.q = q;
  rep.action = a;
  rep.beth_numerator = Vector::Zero(k);
  std::vector<std::size_t> cross_nonzero;
  double lq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Matrix c = loss.cross(mu.atom(i), a);
    const bool zero_grad = gnorm[i] <= kZeroRelative * gmax || gnorm[i] == 0.0;
    const bool zero_cross = c.lpNorm<Eigen::Infinity>() <= kZeroRelative * (1.0 + std::abs(loss.value(mu.atom(i), a)));
    if (zero_grad) {
      rep.zero_gradient_atoms.push_back(i);
      if (!zero_cross) cross_nonzero.push_back(i);
      continue;  // 0/0 = 0
    }
    if (!zero_cross) cross_nonzero.push_back(i);
    bool warn = false;
    const Vector h = h_map(norm, grads[i], &warn);
    rep.h_map_warning = rep.h_map_warning || warn;
    rep.beth_numerator += mu.weight(i) * std::pow(gnorm[i], q - 1.0) * (c * h);
    lq += mu.weight(i) * std::pow(gnorm[i], q);
  }
  // alternative condition: grad_x f != 0 on every atom, or cross = 0 on every atom
  if (!rep.zero_gradient_atoms.empty() && !cross_nonzero.empty()) {
    std::ostringstream os;
    os << "optimizer sensitivity undefined: grad_x f vanishes on atoms {";
    for (std::size_t t = 0; t < rep.zero_gradient_atoms.size(); ++t) os << (t ? ", " : "") << rep.zero_gradient_atoms[t];
    os << "} while grad_x grad_a f is nonzero on atoms {";
    for (std::size_t t = 0; t < cross_nonzero.size(); ++t) os << (t ? ", " : "") << cross_nonzero[t];
    os << "}";
    throw ValidationError(os.str());
  }
  rep.gradient_lq_norm = std::pow(lq, 1.0 / q);
  rep.upsilon = rep.gradient_lq_norm;

  rep.hessian = base_hessian(loss, mu, a);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (rep.hessian + rep.hessian.transpose()));
  if (eig.info() != Eigen::Success) throw NumericalError("Hessian eigen-decomposition failed");
  const Vector ev = eig.eigenvalues();
  const double amax = ev.cwiseAbs().maxCoeff();
  const double amin = ev.cwiseAbs().minCoeff();
  rep.hessian_condition = amin > 0.0 ? amax / amin : std::numeric_limits<double>::infinity();
  if (!(rep.hessian_condition <= kConditionCutoff)) {
    std::ostringstream os;
    os.precision(6);
    os << "Hessian of V(0,.) is singular (condition " << rep.hessian_condition << "); eigenvalues [";
    for (Eigen::Index i = 0; i < ev.size(); ++i) os << (i ? ", " : "") << ev[i];
    os << "]";
    throw NumericalError(os.str());
  }
  if (lq == 0.0) {
    rep.beth = Vector::Zero(k);
    return rep;
  }
  const Vector solved = eig.eigenvectors() *
                        (eig.eigenvectors().transpose() * rep.beth_numerator).cwiseQuotient(ev);
  rep.beth = -std::pow(lq, 1.0 / q - 1.0) * solved;
  return rep;
}

double upsilon_at_r(const LossModel& loss, const DiscreteMeasure& mu, const NormSpec& norm, double r,
                    const OptimizerCertificate& a_star_r, std::span<const DiscreteMeasure> worst_cases,
                    double value_at_r, double value_tol) {
  require_p_above_one(norm);
  require_dims(loss, mu, norm, a_star_r.action);
  if (!(r >= 0.0)) throw ValidationError("radius must be nonnegative");
  if (worst_cases.empty()) throw ValidationError("upsilon_at_r needs at least one worst-case measure");
  const double q = norm.q();
  double best = -1.0;
  for (std::size_t k = 0; k < worst_cases.size(); ++k) {
    const DiscreteMeasure& nu = worst_cases[k];
    const double w = wasserstein_distance(mu, nu, norm);
    if (!(w <= r * (1.0 + 1e-6) + 1e-12)) {
      std::ostringstream os;
      os.precision(17);
      os << "worst-case measure " << k << " lies outside the ball: W_p = " << w << " > r = " << r;
      throw ValidationError(os.str());
    }
    const double v = nu.integrate([&](const Vector& x) { return loss.value(x, a_star_r.action); });
    if (!(std::abs(v - value_at_r) <= value_tol * (1.0 + std::abs(value_at_r)))) {
      std::ostringstream os;
      os.precision(17);
      os << "worst-case measure " << k << " does not attain the robust value: " << v << " vs " << value_at_r;
      throw ValidationError(os.str());
    }
    const double acc = nu.integrate([&](const Vector& x) {
      return std::pow(norm.norm(loss.grad_x(x, a_star_r.action)), q);
    });
    best = std::max(best, std::pow(acc, 1.0 / q));
  }
  return best;
}

SensitivityReport upsilon_constrained(const LossModel& loss, const DiscreteMeasure& mu,
                                      const NormSpec& norm, const ConstraintSet& constraints,
                                      const OptimizerCertificate& a_star) {
  require_p_above_one(norm);
  const Vector& a = a_star.action;
  require_dims(loss, mu, norm, a);
  if (constraints.empty()) throw ValidationError("constraint set is empty");
  if (constraints.state_dim() != loss.state_dim()) throw ValidationError("constraint dimension mismatch");
  const Vector resid = constraints.calibration_residual(mu);
  if (!(resid.lpNorm<Eigen::Infinity>() <= 1e-8)) {
    std::ostringstream os;
    os.precision(17);
    os << "baseline measure violates the constraints: |int Phi dmu| = " << resid.lpNorm<Eigen::Infinity>();
    throw ValidationError(os.str());
  }
  const double q = norm.q();
  const auto m = static_cast<Eigen::Index>(constraints.size());
  const std::size_t n = mu.size();
  std::vector<Vector> g(n);
  std::vector<Matrix> gphi(n);
  for (std::size_t i = 0; i < n; ++i) {
    g[i] = norm.embed(norm.restrict(loss.grad_x(mu.atom(i), a)));
    gphi[i] = constraints.gradients(mu.atom(i));
    for (Eigen::Index j = 0; j < m; ++j) gphi[i].col(j) = norm.embed(norm.restrict(gphi[i].col(j)));
  }

  // Non-degeneracy: the Gram matrix detects exact null directions; the
  // sphere grid measures the L^q version of the infimum.
  Matrix gram = Matrix::Zero(m, m);
  Vector rhs = Vector::Zero(m);
  for (std::size_t i = 0; i < n; ++i) {
    gram += mu.weight(i) * gphi[i].transpose() * gphi[i];
    rhs -= mu.weight(i) * gphi[i].transpose() * g[i];
  }
  auto phi_lq = [&](const Vector& lam) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += mu.weight(i) * std::pow(norm.norm(gphi[i] * lam), q);
    return acc;
  };
  {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
    const double emax = eig.eigenvalues().maxCoeff();
    double grid_min = std::numeric_limits<double>::infinity();
    double grid_max = 0.0;
    std::mt19937_64 rng(20240517);
    std::normal_distribution<double> normal;
    const int samples = m == 1 ? 2 : (m == 2 ? 720 : 4000);
    for (int t = 0; t < samples; ++t) {
      Vector lam(m);
      if (m == 1) {
        lam[0] = t == 0 ? 1.0 : -1.0;
      } else if (m == 2) {
        const double th = 2.0 * M_PI * t / samples;
        lam << std::cos(th), std::sin(th);
      } else {
        for (Eigen::Index j = 0; j < m; ++j) lam[j] = normal(rng);
        lam.normalize();
      }
      const double v = phi_lq(lam);
      grid_min = std::min(grid_min, v);
      grid_max = std::max(grid_max, v);
    }
    if (!(emax > 0.0) || eig.eigenvalues().minCoeff() <= 1e-12 * emax || !(grid_min > 1e-12 * grid_max)) {
      throw ValidationError(
          "constraint family is degenerate (some combination of constraint gradients vanishes "
          "mu-a.e.); drop the redundant constraints and retry");
    }
  }

  auto objective = [&](const Vector& lam, Vector& grad) {
    double acc = 0.0;
    grad.setZero(m);
    for (std::size_t i = 0; i < n; ++i) {
      const Vector u = g[i] + gphi[i] * lam;
      const double un = norm.norm(u);
      if (un == 0.0) continue;
      acc += mu.weight(i) * std::pow(un, q);
      grad += mu.weight(i) * q * std::pow(un, q - 1.0) * (gphi[i].transpose() * h_map(norm, u));
    }
    return acc;
  };

  const Vector lam0 = gram.ldlt().solve(rhs);
  Vector lam = lam0;
  if (m == 1) {
    auto f1 = [&](double l) {
      Vector gr;
      return objective(Vector::Constant(1, l), gr);
    };
    const double scale = std::max(1.0, std::abs(lam0[0]));
    const ScalarMin r = golden_section_unbounded(f1, lam0[0], 0.1 * scale, 1e-13 * scale, 400);
    lam[0] = r.x;
  } else {
    QuasiNewtonOptions qn;
    qn.grad_tol = 1e-14;
    qn.max_iter = 2000;
    for (int restart = 0; restart < 3; ++restart) {
      const QuasiNewtonResult r = minimize_bfgs(objective, lam, qn);
      lam = r.x;
    }
  }
  // the least-squares point is exact for q = 2 with the Euclidean norm; keep the better one
  Vector scratch;
  if (objective(lam0, scratch) < objective(lam, scratch)) lam = lam0;

  SensitivityReport rep;
  rep.p = norm.p();
  rep.q = q;
  rep.action = a;
  rep.lambda_star = lam;
  rep.upsilon = std::pow(objective(lam, scratch), 1.0 / q);
  rep.unconstrained_upsilon = gradient_lq(loss, mu, norm, a);
  rep.gradient_lq_norm = *rep.unconstrained_upsilon;
  return rep;
}

double martingale_upsilon_closed_form(const LossModel& loss, const DiscreteMeasure& mu, const Vector& a) {
  Vector mean = Vector::Zero(loss.state_dim());
  for (std::size_t i = 0; i < mu.size(); ++i) mean += mu.weight(i) * loss.grad_x(mu.atom(i), a);
  double var = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    var += mu.weight(i) * (loss.grad_x(mu.atom(i), a) - mean).squaredNorm();
  }
  return std::sqrt(var);
}

double covariance_upsilon_closed_form(const LossModel& loss, const DiscreteMeasure& mu, const Vector& a,
                                      int i, int j) {
  double gg = 0.0;
  double gphi = 0.0;
  double phiphi = 0.0;
  for (std::size_t t = 0; t < mu.size(); ++t) {
    const Vector& x = mu.atom(t);
    const Vector g = loss.grad_x(x, a);
    gg += mu.weight(t) * g.squaredNorm();
    gphi += mu.weight(t) * (g[i] * x[j] + g[j] * x[i]);
    phiphi += mu.weight(t) * (x[i] * x[i] + x[j] * x[j]);
  }
  if (!(phiphi > 0.0)) throw ValidationError("covariance constraint gradient vanishes mu-a.e.");
  return std::sqrt(std::max(0.0, gg - gphi * gphi / phiphi));
}

}  // namespace wdro
