#include "wdro/problem.hpp"

#include "wdro/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace wdro {

LossModel::LossModel(std::string name, int state_dim, int action_dim, double growth, Evaluators ev)
    : name_(std::move(name)), d_(state_dim), k_(action_dim), growth_(growth), ev_(std::move(ev)) {
  if (d_ < 1 || k_ < 1) throw ValidationError("loss '" + name_ + "' needs d >= 1 and k >= 1");
  if (!ev_.value) throw ValidationError("loss '" + name_ + "' has no value evaluator");
  const Scalar value = ev_.value;
  if (!ev_.grad_x) {
    analytic_[0] = false;
    ev_.grad_x = [value](const Vector& x, const Vector& a) {
      return fd_gradient([&](const Vector& xx) { return value(xx, a); }, x);
    };
  }
  if (!ev_.grad_a) {
    analytic_[1] = false;
    ev_.grad_a = [value](const Vector& x, const Vector& a) {
      return fd_gradient([&](const Vector& aa) { return value(x, aa); }, a);
    };
  }
  const Gradient grad_a = ev_.grad_a;
  if (!ev_.cross) {
    analytic_[2] = false;
    ev_.cross = [grad_a](const Vector& x, const Vector& a) {
      return fd_jacobian([&](const Vector& xx) { return grad_a(xx, a); }, x);
    };
  }
  if (!ev_.hess_a) {
    analytic_[3] = false;
    ev_.hess_a = [grad_a](const Vector& x, const Vector& a) {
      Matrix h = fd_jacobian([&](const Vector& aa) { return grad_a(x, aa); }, a);
      return Matrix(0.5 * (h + h.transpose()));
    };
  }
}

bool LossModel::analytic(Derivative which) const { return analytic_[static_cast<int>(which)]; }

LossModel scale_loss(const LossModel& f, double c) {
  const auto& e = f.evaluators();
  LossModel::Evaluators ev{
      [e, c](const Vector& x, const Vector& a) { return c * e.value(x, a); },
      [e, c](const Vector& x, const Vector& a) { return Vector(c * e.grad_x(x, a)); },
      [e, c](const Vector& x, const Vector& a) { return Vector(c * e.grad_a(x, a)); },
      [e, c](const Vector& x, const Vector& a) { return Matrix(c * e.cross(x, a)); },
      [e, c](const Vector& x, const Vector& a) { return Matrix(c * e.hess_a(x, a)); }};
  std::ostringstream name;
  name << f.name() << "*" << c;
  return LossModel(name.str(), f.state_dim(), f.action_dim(), f.growth(), std::move(ev));
}

LossModel offset_loss(const LossModel& f, double c) {
  LossModel::Evaluators ev = f.evaluators();
  const auto value = ev.value;
  ev.value = [value, c](const Vector& x, const Vector& a) { return value(x, a) + c; };
  std::ostringstream name;
  name << f.name() << "+" << c;
  return LossModel(name.str(), f.state_dim(), f.action_dim(), f.growth(), std::move(ev));
}

DerivativeCheck check_derivatives(const LossModel& f, const Vector& x, const Vector& a,
                                  double abs_tol, double rel_tol) {
  DerivativeCheck out;
  auto compare = [&](const Matrix& analytic, const Matrix& numeric) {
    for (Eigen::Index i = 0; i < analytic.rows(); ++i) {
      for (Eigen::Index j = 0; j < analytic.cols(); ++j) {
        const double an = analytic(i, j);
        const double nu = numeric(i, j);
        const double err = std::abs(an - nu);
        const double mag = std::max(std::abs(an), std::abs(nu));
        out.max_abs_error = std::max(out.max_abs_error, err);
        if (mag > 0.0) out.max_rel_error = std::max(out.max_rel_error, err / mag);
        if (err > std::max(abs_tol, rel_tol * mag)) out.ok = false;
      }
    }
  };
  using D = LossModel::Derivative;
  if (f.analytic(D::GradX)) {
    compare(f.grad_x(x, a), fd_gradient([&](const Vector& xx) { return f.value(xx, a); }, x));
  }
  if (f.analytic(D::GradA)) {
    compare(f.grad_a(x, a), fd_gradient([&](const Vector& aa) { return f.value(x, aa); }, a));
  }
  if (f.analytic(D::Cross)) {
    compare(f.cross(x, a), fd_jacobian([&](const Vector& xx) { return f.grad_a(xx, a); }, x));
  }
  if (f.analytic(D::HessA)) {
    compare(f.hess_a(x, a), fd_jacobian([&](const Vector& aa) { return f.grad_a(x, aa); }, a));
  }
  return out;
}

// ---------------------------------------------------------------------------

ConstraintSet::ConstraintSet(std::string name, int state_dim, std::vector<Function> phi,
                             std::vector<GradientFn> grad)
    : name_(std::move(name)), d_(state_dim), phi_(std::move(phi)), grad_(std::move(grad)) {
  if (phi_.size() != grad_.size()) throw ValidationError("constraint functions and gradients mismatch");
}

Vector ConstraintSet::values(const Vector& x) const {
  Vector v(static_cast<Eigen::Index>(phi_.size()));
  for (std::size_t i = 0; i < phi_.size(); ++i) v[static_cast<Eigen::Index>(i)] = phi_[i](x);
  return v;
}

Matrix ConstraintSet::gradients(const Vector& x) const {
  Matrix g(x.size(), static_cast<Eigen::Index>(grad_.size()));
  for (std::size_t i = 0; i < grad_.size(); ++i) g.col(static_cast<Eigen::Index>(i)) = grad_[i](x);
  return g;
}

Vector ConstraintSet::calibration_residual(const DiscreteMeasure& mu) const {
  Vector r = Vector::Zero(static_cast<Eigen::Index>(phi_.size()));
  for (std::size_t i = 0; i < mu.size(); ++i) r += mu.weight(i) * values(mu.atom(i));
  return r;
}

ConstraintSet ConstraintSet::martingale(const Vector& x0) {
  std::vector<Function> phi;
  std::vector<GradientFn> grad;
  const Eigen::Index d = x0.size();
  for (Eigen::Index i = 0; i < d; ++i) {
    const double c = x0[i];
    phi.emplace_back([i, c](const Vector& x) { return x[i] - c; });
    grad.emplace_back([i, d](const Vector&) { return Vector(Vector::Unit(d, i)); });
  }
  return ConstraintSet("martingale", static_cast<int>(d), std::move(phi), std::move(grad));
}

ConstraintSet ConstraintSet::covariance(int state_dim, int i, int j, double b) {
  if (i < 0 || j < 0 || i >= state_dim || j >= state_dim || i == j) {
    throw ValidationError("covariance constraint needs two distinct coordinates");
  }
  std::vector<Function> phi{[i, j, b](const Vector& x) { return x[i] * x[j] - b; }};
  std::vector<GradientFn> grad{[i, j, state_dim](const Vector& x) {
    Vector g = Vector::Zero(state_dim);
    g[i] = x[j];
    g[j] = x[i];
    return g;
  }};
  return ConstraintSet("covariance", state_dim, std::move(phi), std::move(grad));
}

ConstraintSet ConstraintSet::linear(const Vector& c, double b) {
  std::vector<Function> phi{[c, b](const Vector& x) { return c.dot(x) - b; }};
  std::vector<GradientFn> grad{[c](const Vector&) { return c; }};
  return ConstraintSet("linear", static_cast<int>(c.size()), std::move(phi), std::move(grad));
}

ConstraintSet ConstraintSet::combine(const std::vector<ConstraintSet>& parts) {
  ConstraintSet out;
  std::string name;
  for (const auto& p : parts) {
    if (out.d_ != 0 && p.d_ != out.d_) throw ValidationError("constraints have mixed dimensions");
    out.d_ = p.d_;
    name += (name.empty() ? "" : "+") + p.name_;
    out.phi_.insert(out.phi_.end(), p.phi_.begin(), p.phi_.end());
    out.grad_.insert(out.grad_.end(), p.grad_.begin(), p.grad_.end());
  }
  out.name_ = name;
  return out;
}

// ---------------------------------------------------------------------------

double base_value(const LossModel& loss, const DiscreteMeasure& mu, const Vector& a) {
  return mu.integrate([&](const Vector& x) { return loss.value(x, a); });
}

Vector base_gradient(const LossModel& loss, const DiscreteMeasure& mu, const Vector& a) {
  Vector g = Vector::Zero(loss.action_dim());
  for (std::size_t i = 0; i < mu.size(); ++i) g += mu.weight(i) * loss.grad_a(mu.atom(i), a);
  return g;
}

Matrix base_hessian(const LossModel& loss, const DiscreteMeasure& mu, const Vector& a) {
  Matrix h = Matrix::Zero(loss.action_dim(), loss.action_dim());
  for (std::size_t i = 0; i < mu.size(); ++i) h += mu.weight(i) * loss.hess_a(mu.atom(i), a);
  return h;
}

namespace {

void check_problem_dims(const LossModel& loss, const DiscreteMeasure& mu, const Vector& a) {
  if (mu.dim() != loss.state_dim()) {
    throw ValidationError("measure dimension " + std::to_string(mu.dim()) + " does not match loss '" +
                          loss.name() + "' state dimension " + std::to_string(loss.state_dim()));
  }
  if (a.size() != loss.action_dim()) {
    throw ValidationError("action has dimension " + std::to_string(a.size()) + ", loss '" +
                          loss.name() + "' expects " + std::to_string(loss.action_dim()));
  }
}

}  // namespace

OptimizerCertificate solve_base_problem(const LossModel& loss, const DiscreteMeasure& mu,
                                        const Vector& a0, const SolveOptions& options) {
  check_problem_dims(loss, mu, a0);
  QuasiNewtonOptions qn;
  qn.max_iter = options.max_iter;
  qn.grad_tol = 0.1 * options.tolerance / std::sqrt(static_cast<double>(loss.action_dim()));
  qn.value_tol = 0.0;
  {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(base_hessian(loss, mu, a0));
    if (eig.info() == Eigen::Success && eig.eigenvalues().minCoeff() > 0.0) {
      qn.initial_inverse_hessian = eig.eigenvectors() *
                                   eig.eigenvalues().cwiseInverse().asDiagonal() *
                                   eig.eigenvectors().transpose();
    }
  }
  auto objective = [&](const Vector& a, Vector& g) {
    double v = 0.0;
    g.setZero(a.size());
    for (std::size_t i = 0; i < mu.size(); ++i) {
      v += mu.weight(i) * loss.value(mu.atom(i), a);
      g += mu.weight(i) * loss.grad_a(mu.atom(i), a);
    }
    return v;
  };
  QuasiNewtonResult r = minimize_bfgs(objective, a0, qn);
  Vector a = r.x;
  Vector g = base_gradient(loss, mu, a);
  // Newton polish with the exact Hessian when it is positive definite
  for (int it = 0; it < 20 && g.norm() > 0.1 * options.tolerance; ++it) {
    Eigen::LDLT<Matrix> ldlt(base_hessian(loss, mu, a));
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) break;
    const Vector step = ldlt.solve(g);
    const Vector trial = a - step;
    const Vector gt = base_gradient(loss, mu, trial);
    if (!(gt.norm() < g.norm())) break;
    a = trial;
    g = gt;
  }
  OptimizerCertificate cert;
  cert.action = a;
  cert.residual = g.norm();
  cert.value = base_value(loss, mu, a);
  cert.source = OptimizerCertificate::Source::Solved;
  cert.iterations = r.iterations;
  if (!(cert.residual <= options.tolerance)) {
    std::ostringstream os;
    os.precision(17);
    os << "solve_base_problem did not converge for loss '" << loss.name() << "': residual "
       << cert.residual << " > " << options.tolerance << " after " << r.iterations
       << " iterations; best iterate [";
    for (Eigen::Index i = 0; i < a.size(); ++i) os << (i ? ", " : "") << a[i];
    os << "]";
    throw NumericalError(os.str());
  }
  return cert;
}

GrowthReport check_growth(const LossModel& loss, const DiscreteMeasure& mu, const Vector& a,
                          double p) {
  GrowthReport rep;
  rep.exponent_p = p;
  auto ratio = [&](const Vector& x) {
    return loss.grad_x(x, a).norm() / (1.0 + std::pow(x.norm(), p - 1.0));
  };
  for (const auto& x : mu.atoms()) rep.fitted_constant = std::max(rep.fitted_constant, ratio(x));
  const Vector center = mu.mean();
  double radius = 0.0;
  for (const auto& x : mu.atoms()) radius = std::max(radius, (x - center).norm());
  radius = std::max(radius, 1.0);
  std::vector<Vector> probes;
  for (const auto& x : mu.atoms()) probes.push_back(center + 10.0 * (x - center));
  for (int i = 0; i < mu.dim(); ++i) {
    for (double sgn : {-1.0, 1.0}) {
      probes.push_back(center + sgn * 10.0 * radius * Vector::Unit(mu.dim(), i));
    }
  }
  for (const auto& y : probes) rep.max_ratio = std::max(rep.max_ratio, ratio(y));
  constexpr double kFlagInflation = 3.0;
  if (rep.fitted_constant > 0.0) {
    rep.inflation_ratio = rep.max_ratio / rep.fitted_constant;
    rep.flagged = rep.inflation_ratio > kFlagInflation;
  } else {
    rep.inflation_ratio = rep.max_ratio > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    rep.flagged = rep.max_ratio > 0.0;
  }
  std::ostringstream os;
  os.precision(6);
  os << (rep.flagged ? "growth flag: " : "growth ok: ") << "|grad_x f|/(1+|x|^(p-1)) rises from "
     << rep.fitted_constant << " on the atoms to " << rep.max_ratio
     << " on the 10x hull (heuristic, not a certificate)";
  rep.message = os.str();
  return rep;
}

}  // namespace wdro
