#pragma once

#include "wdro/measures.hpp"
#include "wdro/numerics.hpp"

#include <json.hpp>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace wdro {

/// Loss f(x, a) with x in R^d (state) and a in R^k (action), plus its
/// derivative stack. Orientation: grad_x is d x 1, grad_a is k x 1,
/// cross = grad_x grad_a f is k x d (row i holds d/dx of df/da_i), and
/// hess_a is k x k.
///
/// Only `value` is mandatory. Missing derivatives fall back to central
/// differences of the next lower order (grad_x and grad_a from value,
/// cross from grad_a, hess_a from grad_a), and the fallback is recorded.
class LossModel {
 public:
  using Scalar = std::function<double(const Vector& x, const Vector& a)>;
  using Gradient = std::function<Vector(const Vector& x, const Vector& a)>;
  using Hessian = std::function<Matrix(const Vector& x, const Vector& a)>;

  struct Evaluators {
    Scalar value;
    Gradient grad_x;
    Gradient grad_a;
    Hessian cross;
    Hessian hess_a;
  };

  enum class Derivative { GradX, GradA, Cross, HessA };

  LossModel(std::string name, int state_dim, int action_dim, double growth, Evaluators ev);

  const std::string& name() const { return name_; }
  int state_dim() const { return d_; }
  int action_dim() const { return k_; }
  /// Growth exponent: |f(x,a)| <~ 1 + |x|^growth. Used to flag obviously
  /// unbounded inner suprema.
  double growth() const { return growth_; }
  bool analytic(Derivative which) const;

  double value(const Vector& x, const Vector& a) const { return ev_.value(x, a); }
  Vector grad_x(const Vector& x, const Vector& a) const { return ev_.grad_x(x, a); }
  Vector grad_a(const Vector& x, const Vector& a) const { return ev_.grad_a(x, a); }
  Matrix cross(const Vector& x, const Vector& a) const { return ev_.cross(x, a); }
  Matrix hess_a(const Vector& x, const Vector& a) const { return ev_.hess_a(x, a); }

  const Evaluators& evaluators() const { return ev_; }

 private:
  std::string name_;
  int d_;
  int k_;
  double growth_;
  Evaluators ev_;
  bool analytic_[4] = {true, true, true, true};
};

/// c * f
LossModel scale_loss(const LossModel& f, double c);
/// f + c
LossModel offset_loss(const LossModel& f, double c);

/// Max absolute and relative deviation between analytic and central
/// finite-difference derivatives at a point.
struct DerivativeCheck {
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
  bool ok = true;
};

/// Compares every analytic derivative of f against central differences at
/// (x, a), passing when |analytic - fd| <= max(abs_tol, rel_tol * magnitude).
DerivativeCheck check_derivatives(const LossModel& f, const Vector& x, const Vector& a,
                                  double abs_tol = 1e-6, double rel_tol = 1e-4);

// ---------------------------------------------------------------------------

/// Linear constraint functions Phi_1..Phi_m on the state space.
class ConstraintSet {
 public:
  using Function = std::function<double(const Vector& x)>;
  using GradientFn = std::function<Vector(const Vector& x)>;

  ConstraintSet() = default;
  ConstraintSet(std::string name, int state_dim, std::vector<Function> phi,
                std::vector<GradientFn> grad);

  const std::string& name() const { return name_; }
  std::size_t size() const { return phi_.size(); }
  bool empty() const { return phi_.empty(); }
  int state_dim() const { return d_; }

  Vector values(const Vector& x) const;
  /// d x m matrix with column i = grad Phi_i(x).
  Matrix gradients(const Vector& x) const;
  /// int Phi dmu.
  Vector calibration_residual(const DiscreteMeasure& mu) const;

  /// Phi(x) = x - x0 (barycentre preservation), m = d.
  static ConstraintSet martingale(const Vector& x0);
  /// Phi(x) = x_i x_j - b.
  static ConstraintSet covariance(int state_dim, int i, int j, double b);
  /// Phi(x) = <c, x> - b.
  static ConstraintSet linear(const Vector& c, double b);
  /// Concatenation.
  static ConstraintSet combine(const std::vector<ConstraintSet>& parts);

 private:
  std::string name_;
  int d_ = 0;
  std::vector<Function> phi_;
  std::vector<GradientFn> grad_;
};

/// A (claimed) optimizer of V(0, .) or V(delta, .).
struct OptimizerCertificate {
  enum class Source { Supplied, Solved };
  Vector action;
  /// |grad_a V(., a)| (Euclidean); for robust solves the envelope-gradient proxy.
  double residual = 0.0;
  /// V(0, a) for base solves, V(delta, a) for robust solves.
  double value = 0.0;
  Source source = Source::Supplied;
  int iterations = 0;
};

// ---------------------------------------------------------------------------

/// Builds a catalog loss. Known ids (params in brackets, defaults after '='):
///   constant            f = value + a^2/2                [value=0, dim=1]
///   linear              f = <c,x> + kappa (a-b)^2/2       [c, b=0, kappa=1]
///   power               f = coef |x|_2^exponent + a^2/2   [dim=1, exponent=2, coef=1]
///   quadratic-tracking  f = |a - x|_2^2                   [dim=1]
///   sqrt-regression     f((x,y),a) = (y - <x,a>)^2        [k=1]
///   call                f = (S0 x - K)^+ + a^2/2          [S0=1, K=1]
///   smooth-call         f = softplus_beta(S0 x - K) + a^2/2  [S0=1, K=1, beta=50]
///   oce                 f = l(g(x) - a) + a               [l, g]
///   hedging             f = l(g(x) + <a, x - x0>)         [l, g, x0]
///   oce-hedging         f = l(g(x) + <H, x - x0> + m) - m, a = (H, m)  [l, g, x0]
///   quadratic-c2        f = a^2/2 - g(x) a                [g]
///   avar                f = m + (<z,x> - m)^+ / alpha     [z, alpha]
///   nn                  f = |y - (A2 tanh(A1 x + b1) + b2)|^power, a = (A1,b1,A2,b2)
///                       [input_dim=1, hidden=8, output_dim=1, power=2, activation=tanh|identity]
/// l is one of "linear" (y), "quadratic" (y + y^2/2), "exp" (e^y), "avar"
/// (y^+/alpha, params.alpha); g is {"id": "identity" | "linear" | "call" |
/// "smooth-call", ...} with the parameters of the matching payoff.
/// Unknown ids raise a ValidationError listing the catalog.
LossModel builtin_loss(const std::string& id, const nlohmann::json& params = nlohmann::json::object());

/// Ids accepted by builtin_loss.
std::vector<std::string> loss_catalog();

struct SolveOptions {
  double tolerance = 1e-8;
  int max_iter = 2000;
};

/// Minimizes V(0, a) = int f(x, a) mu(dx) by quasi-Newton descent starting
/// from a0. Throws NumericalError carrying the best iterate and residual if
/// the stationarity residual does not reach the tolerance.
OptimizerCertificate solve_base_problem(const LossModel& loss, const DiscreteMeasure& mu,
                                        const Vector& a0, const SolveOptions& options = {});

/// int f(x, a) mu(dx), grad and Hessian in a.
double base_value(const LossModel& loss, const DiscreteMeasure& mu, const Vector& a);
Vector base_gradient(const LossModel& loss, const DiscreteMeasure& mu, const Vector& a);
Matrix base_hessian(const LossModel& loss, const DiscreteMeasure& mu, const Vector& a);

/// Heuristic check of |grad_x f| <= c (1 + |x|^(p-1)) over the atoms and an
/// inflated hull. Not a certificate: growth cannot be certified from samples.
struct GrowthReport {
  double exponent_p = 0.0;
  /// Fitted constant from the atoms alone.
  double fitted_constant = 0.0;
  /// Largest envelope ratio seen on the 10x inflated probe set.
  double max_ratio = 0.0;
  /// max_ratio / fitted_constant.
  double inflation_ratio = 0.0;
  bool flagged = false;
  std::string message;
};

GrowthReport check_growth(const LossModel& loss, const DiscreteMeasure& mu, const Vector& a,
                          double p);

}  // namespace wdro
