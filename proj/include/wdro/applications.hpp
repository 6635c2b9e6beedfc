#pragma once

#include "wdro/measures.hpp"
#include "wdro/oracle.hpp"
#include "wdro/problem.hpp"
#include "wdro/sensitivity.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace wdro {

// ---------------------------------------------------------------------------
// Robust option pricing.

struct BlackScholesSpec {
  double S0 = 1.0;
  double K = 1.2;
  double T = 1.0;
  double sigma = 0.2;
  /// Atoms of the discretized law of S_T / S0.
  int atoms = 100000;
};

/// (log(S0/K) - sigma^2 T/2) / (sigma sqrt T).
double bs_d_minus(const BlackScholesSpec& spec);
/// Black-Scholes call price.
double bs_call_price(const BlackScholesSpec& spec);
/// S0 sqrt(Phi(d-) (1 - Phi(d-))): value sensitivity of the call under the
/// martingale constraint, p = 2.
double bs_call_upsilon(const BlackScholesSpec& spec);
/// S0 phi(d- + sigma sqrt T).
double bs_vega(const BlackScholesSpec& spec);

/// Equal-probability discretization of S_T / S0: atoms at the lognormal
/// quantiles of the cell midpoints (i + 1/2)/n, rescaled to mean exactly 1.
DiscreteMeasure lognormal_returns(const BlackScholesSpec& spec, int atoms);

/// S0 sqrt(mu_k (1 - mu_k)) with mu_k = mu([K/S0, inf)) for a 1-d measure
/// of gross returns.
double call_upsilon_empirical(const DiscreteMeasure& mu, double S0, double K);

/// Robust call price sup { int (S0 x - K)^+ dnu : nu in B_delta(mu), int x dnu = int x dmu }
/// for p = 2 through the constrained dual oracle.
double robust_call_price(const DiscreteMeasure& mu, double S0, double K, double delta,
                         const OracleOptions& options = {});

// ---------------------------------------------------------------------------
// Risk measures.

/// |z| / alpha^(1/p) (Euclidean |z|).
double avar_upsilon(const Vector& z, double alpha, double p);

/// OCE sensitivities for f(x, a) = l(g(x) - a) + a; `l` and `g` use the
/// catalog conventions of builtin_loss("oce"). Solves for a* from a0 and
/// returns the value and optimizer sensitivities. When l'' vanishes on the
/// support, the optimizer is not unique and the optimizer sensitivity is
/// reported as 0 (the numerator vanishes with the Hessian).
SensitivityReport oce_sensitivities(const nlohmann::json& l, const nlohmann::json& g,
                                    const DiscreteMeasure& mu, const NormSpec& norm, double a0 = 0.0);

// ---------------------------------------------------------------------------
// Square-root LASSO / Ridge.

/// Regression data is a measure on R^(k+1); the last coordinate is the label.
struct RegressionMoments {
  Matrix D;   // int x x^T
  Vector b;   // int y x
  double c;   // int y^2
};
RegressionMoments regression_moments(const DiscreteMeasure& data);

struct ShrinkageResult {
  Vector a_star;        // OLS estimator D^{-1} int y x
  double v0 = 0.0;      // int (y^2 - <a*, x> y)
  Vector beth;          // -sqrt(V0) D^{-1} h_s(a*)
  Vector first_order;   // a* + delta beth
};

/// First-order robust estimator. Throws ValidationError for a singular
/// design or, when s = 1, for an OLS coefficient that is exactly zero.
ShrinkageResult sqrt_regression_shrinkage(const DiscreteMeasure& data, double s, double delta);

/// argmin_a sqrt(int (y - <a,x>)^2) + delta |a|_s: exact coordinate descent
/// for s = 1, quasi-Newton for s > 1 (with the a = 0 optimality test first).
Vector exact_sqrt_regression(const DiscreteMeasure& data, double s, double delta);

/// N observations of y = <beta, x> + eps with x, eps i.i.d. standard normal.
DiscreteMeasure linear_model_sample(const Vector& beta, int n, std::uint64_t seed, double noise = 1.0);

/// Coefficients of the shrinkage figure.
Vector figure3_coefficients();

// ---------------------------------------------------------------------------
// Neural network robustness.

/// (int |grad_(x,y) f|^q dmu)^(1/q) for the catalog network loss with the
/// given architecture json and parameters.
double nn_robustness(const nlohmann::json& architecture, const Vector& params, const DiscreteMeasure& data,
                     const NormSpec& norm);

// ---------------------------------------------------------------------------
// Distance-to-set expansion.

/// Smooth map G: R^d -> R^m with Jacobian (m x d).
struct SmoothMap {
  int in_dim = 1;
  int out_dim = 1;
  std::function<Vector(const Vector&)> value;
  std::function<Matrix(const Vector&)> jacobian;
  static SmoothMap affine(const Matrix& A, const Vector& b);
};

/// Closed convex set with exact Euclidean projection.
class ProjectionSet {
 public:
  static ProjectionSet ball(const Vector& center, double radius);
  static ProjectionSet box(const Vector& lower, const Vector& upper);
  static ProjectionSet half_space(const Vector& normal, double offset);

  Vector project(const Vector& y) const;
  double distance(const Vector& y) const;
  /// In the set and within tol of its boundary.
  bool on_boundary(const Vector& y, double tol) const;
  int dim() const;

 private:
  enum class Kind { Ball, Box, HalfSpace };
  Kind kind_ = Kind::Ball;
  Vector a_;
  Vector b_;
  double r_ = 0.0;
};

/// Loss d(G(x), E) as a LossModel (action dimension 1, unused).
LossModel distance_loss(const SmoothMap& G, const ProjectionSet& E);

struct UqExpansion {
  double base = 0.0;         // int d(G(x), E) dmu
  double slope = 0.0;        // (int |grad_x d(G(x),E)|^q dmu)^(1/q)
  double first_order = 0.0;  // base - slope delta
};

/// First-order value of inf_{nu in B_delta(mu)} int d(G(x), E) dnu. Throws
/// ValidationError if atoms carrying more than 1e-9 mass map onto the
/// boundary of E.
UqExpansion uq_first_order(const SmoothMap& G, const ProjectionSet& E, const DiscreteMeasure& mu,
                           const NormSpec& norm, double delta);

// ---------------------------------------------------------------------------
// Out-of-sample study.

struct CltStudyConfig {
  /// "gaussian" (d = 1, N(mean, sd^2)) or "linear-model" (x ~ N(0, I_k), y = <beta,x> + eps).
  std::string sampler = "gaussian";
  double mean = 0.0;
  double sd = 1.0;
  Vector beta;
  int n = 400;
  int replications = 200;
  std::uint64_t seed = 1;
  /// Sample size of the reference measure standing in for the true law.
  int reference_size = 200000;
};

struct CltReport {
  int n = 0;
  int replications = 0;
  int failures = 0;
  double delta = 0.0;
  Vector a_true;                  // optimizer of the reference problem
  Vector empirical_mean;          // mean of sqrt(N)(a*_N,delta - a*)
  Vector standard_error;          // per-coordinate sd / sqrt(M)
  Matrix empirical_covariance;
  Vector predicted_mean;          // -(Hessian)^{-1} Theta
  Matrix predicted_covariance;    // H^{-1} Cov(grad_a f) H^{-1}
  double oos_empirical = 0.0;     // mean of N (V(0, a*_N,delta) - V(0, a*))
  double oos_predicted = 0.0;     // E[ (Z+m)^T H (Z+m) ] / 2
  std::vector<Vector> scaled_errors;
};

/// Monte Carlo study of the robust estimator at delta = 1/sqrt(N). The
/// loss is "quadratic-tracking" (robust solve = sample mean) or
/// "sqrt-regression" (robust solve = exact_sqrt_regression with norm s);
/// other catalog losses use robust_optimize.
CltReport clt_study(const CltStudyConfig& config, const LossModel& loss, const NormSpec& norm);

nlohmann::json clt_report_to_json(const CltReport& r);

}  // namespace wdro
