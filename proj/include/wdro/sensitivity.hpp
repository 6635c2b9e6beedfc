#pragma once

#include "wdro/measures.hpp"
#include "wdro/problem.hpp"

#include <json.hpp>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace wdro {

/// First-order sensitivities of the robust value and optimizer, with the
/// intermediate integrals they are built from.
struct SensitivityReport {
  /// Value sensitivity, >= 0.
  double upsilon = 0.0;
  /// Optimizer sensitivity (absent for value-only runs).
  std::optional<Vector> beth;
  double p = 2.0;
  double q = 2.0;
  /// Action at which the report was evaluated (the minimizing one when
  /// several optimizers were supplied) and its index in the input list.
  Vector action;
  std::size_t optimizer_index = 0;
  /// (int |grad_x f|^q dmu)^(1/q).
  double gradient_lq_norm = 0.0;
  /// Hessian of V(0, .) at the action and its condition number.
  Matrix hessian;
  double hessian_condition = 0.0;
  /// int cross(x) h(grad_x f) |grad_x f|^(q-1) dmu.
  Vector beth_numerator;
  /// Atoms with grad_x f = 0 (they contribute nothing to the numerator).
  std::vector<std::size_t> zero_gradient_atoms;
  /// Set when an s = 1 h-map met a zero component.
  bool h_map_warning = false;
  /// Constrained runs: optimal multipliers and the unconstrained value.
  Vector lambda_star;
  std::optional<double> unconstrained_upsilon;
};

nlohmann::json report_to_json(const SensitivityReport& report);

/// min over the supplied optimizers of (sum_i w_i |grad_x f(x_i, a*)|^q)^(1/q).
/// Throws ValidationError for p <= 1 or an empty optimizer list.
SensitivityReport upsilon(const LossModel& loss, const DiscreteMeasure& mu, const NormSpec& norm,
                          std::span<const OptimizerCertificate> optimizers);

/// Optimizer sensitivity
///   -(int |g|^q)^(1/q - 1) H^{-1} int cross h(g) |g|^(q-1) dmu,  g = grad_x f(., a*),
/// with H = sum_i w_i hess_a f(x_i, a*). Atoms with g = 0 contribute zero.
/// Throws NumericalError when H is singular (condition above 1e12) and
/// ValidationError when neither g != 0 on every atom nor cross = 0 on every
/// atom holds.
SensitivityReport beth(const LossModel& loss, const DiscreteMeasure& mu, const NormSpec& norm,
                       const OptimizerCertificate& a_star);

/// Right derivative of the robust value at radius r > 0: the max over the
/// supplied worst-case measures nu of (int |grad_x f(x, a*_r)|^q dnu)^(1/q).
/// Each nu must satisfy W_p(mu, nu) <= r (1 + 1e-6) and
/// |int f(., a*_r) dnu - value_at_r| <= value_tol (1 + |value_at_r|).
/// The result covers only the listed measures, not the whole worst-case set.
double upsilon_at_r(const LossModel& loss, const DiscreteMeasure& mu, const NormSpec& norm, double r,
                    const OptimizerCertificate& a_star_r, std::span<const DiscreteMeasure> worst_cases,
                    double value_at_r, double value_tol = 1e-6);

/// inf over lambda in R^m of (int |grad_x f + sum_j lambda_j grad Phi_j|^q dmu)^(1/q).
/// Requires |int Phi dmu| <= 1e-8 and a non-degenerate constraint family.
SensitivityReport upsilon_constrained(const LossModel& loss, const DiscreteMeasure& mu,
                                      const NormSpec& norm, const ConstraintSet& constraints,
                                      const OptimizerCertificate& a_star);

/// Closed form under the martingale constraint for p = 2 and the Euclidean
/// norm: the standard deviation of grad_x f(., a) under mu, sqrt(E|g - E g|^2).
double martingale_upsilon_closed_form(const LossModel& loss, const DiscreteMeasure& mu, const Vector& a);

/// Closed form under the covariance constraint x_i x_j = b (p = 2, Euclidean):
/// sqrt(E|g|^2 - (E<g, grad Phi>)^2 / E|grad Phi|^2).
double covariance_upsilon_closed_form(const LossModel& loss, const DiscreteMeasure& mu, const Vector& a,
                                      int i, int j);

inline double first_order_value(double v0, double ups, double delta) { return v0 + ups * delta; }

inline Vector first_order_optimizer(const Vector& a_star, const Vector& beth_vec, double delta) {
  return a_star + delta * beth_vec;
}

}  // namespace wdro
