#pragma once

#include "wdro/measures.hpp"
#include "wdro/problem.hpp"

#include <json.hpp>

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace wdro {

/// Knobs of the brute-force dual oracle.
struct OracleOptions {
  /// Target accuracy of V(delta, a), relative to 1 + |V|.
  double tolerance = 1e-7;
  /// Local ascents per atom and per multiplier value.
  int multistart = 8;
  /// Coarse start grid reaches this many transport radii.
  double grid_span = 5.0;
  /// Seeds the random start directions (d > 1); recorded in results.
  std::uint64_t seed = 0x5eedULL;
  int max_lambda_iter = 200;
};

/// Dual evaluation of V(delta, a) = sup_{nu in B_delta(mu)} int f(., a) dnu.
struct DualEvalResult {
  /// Dual value inf_lambda [lambda delta^p + sum_i w_i sup_y (f(y,a) - lambda c(x_i,y))].
  double value = 0.0;
  /// Optimal multiplier; +infinity for delta = 0.
  double lambda_star = 0.0;
  /// Maximizers y*_i at the feasible end of the final multiplier bracket
  /// (with the original weights, transport cost <= delta^p).
  std::vector<Vector> displaced_atoms;
  /// Mixture of the maximizers at both bracket ends whose transport cost is
  /// exactly delta^p; int f dworst_case is the primal value.
  std::optional<DiscreteMeasure> worst_case;
  /// Transport cost sum_i w_i c(x_i, y_i) of the worst-case coupling.
  double transport_cost = 0.0;
  /// Primal value int f dworst_case (a lower bound on V).
  double primal_value = 0.0;
  /// value - primal_value (>= 0 up to rounding).
  double gap = 0.0;
  /// int f dmu.
  double expectation = 0.0;
  /// Constraint multipliers (constrained evaluations only).
  Vector eta;
  std::uint64_t seed = 0;
  int lambda_iterations = 0;
};

nlohmann::json dual_result_to_json(const DualEvalResult& r);

/// Warm-start cache shared across nearby evaluations (same loss, measure and
/// norm). Not thread-safe; one per solver run.
class OracleCache {
 public:
  OracleCache();
  ~OracleCache();
  OracleCache(OracleCache&&) noexcept;
  OracleCache& operator=(OracleCache&&) noexcept;

  struct Impl;
  Impl& impl() { return *impl_; }

 private:
  std::unique_ptr<Impl> impl_;
};

/// Evaluates V(delta, a) through the dual. Throws ValidationError for
/// delta < 0 or mismatched dimensions and NumericalError("radius-order
/// mismatch ...") when the inner supremum stays unbounded for every
/// multiplier (f grows at least like |x|^p), and up front for losses of
/// exponential type (growth = inf) unless the support is a finite box.
DualEvalResult eval_dual(const LossModel& loss, const DiscreteMeasure& mu, const NormSpec& norm,
                         double delta, const Vector& a, const SupportSpec& support = {},
                         const OracleOptions& options = {}, OracleCache* cache = nullptr);

/// sup over nu in B_delta(mu) with int Phi dnu = 0 of int f dnu, via the
/// dual inf over (lambda >= 0, eta) of
/// lambda delta^p + sum_i w_i sup_y (f(y,a) + <eta, Phi(y)> - lambda c(x_i,y)).
DualEvalResult eval_dual_constrained(const LossModel& loss, const DiscreteMeasure& mu,
                                     const NormSpec& norm, double delta, const Vector& a,
                                     const ConstraintSet& constraints, const SupportSpec& support = {},
                                     const OracleOptions& options = {});

/// int f(x + delta T(x), a) dmu with the first-order shift
///   T(x) = h(g) |g|^(q-1) (int |g|^q dmu)^(1/q - 1),  g = grad_x f(x, a),
/// clipped back into S. The pushed measure has transport cost delta^p, so
/// this is a lower bound for V(delta, a).
double eval_primal_lowerbound(const LossModel& loss, const DiscreteMeasure& mu, const NormSpec& norm,
                              double delta, const Vector& a, const SupportSpec& support = {});

struct RobustOptions {
  OracleOptions oracle;
  /// Envelope-gradient tolerance (Euclidean norm).
  double grad_tol = 1e-8;
  int max_newton = 60;
  int max_pattern_evals = 4000;
};

/// Minimizes a -> V(delta, a). Newton steps on the envelope gradient
/// sum w grad_a f(y*, a) of the worst case, globalized by a compass pattern
/// search on V when the gradient route stalls (nonsmooth objectives). The
/// certificate residual is |envelope gradient| after a Newton exit and the
/// final pattern step otherwise.
OptimizerCertificate robust_optimize(const LossModel& loss, const DiscreteMeasure& mu, const NormSpec& norm,
                                     double delta, const Vector& a0, const SupportSpec& support = {},
                                     const RobustOptions& options = {});

struct SlopeEstimate {
  /// Extrapolated slope at delta = 0 (componentwise for optimizer slopes).
  Vector estimate;
  /// Raw secants per delta, in grid order.
  std::vector<Vector> secants;
  std::vector<double> deltas;
  /// V(delta) per delta (value slopes) and robust optimizers per delta.
  std::vector<double> values;
  std::vector<Vector> actions;
  double base_value = 0.0;
  Vector base_action;
};

struct SlopeOptions {
  RobustOptions robust;
  /// Keep a = a* for every delta (envelope route) instead of re-optimizing.
  bool fixed_action = false;
};

/// Slope of delta -> V(delta) = inf_a V(delta, a) at 0 from secants on a
/// strictly decreasing grid (>= 3 points, each >= 10 x oracle tolerance),
/// extrapolated to delta = 0. Throws NumericalError when V is not monotone
/// along the grid.
SlopeEstimate fd_value_slope(const LossModel& loss, const DiscreteMeasure& mu, const NormSpec& norm,
                             const OptimizerCertificate& a_star, std::span<const double> deltas,
                             const SupportSpec& support = {}, const SlopeOptions& options = {});

/// Componentwise slope of delta -> a*_delta at 0. Throws NumericalError when
/// a secant sequence oscillates without settling.
SlopeEstimate fd_optimizer_slope(const LossModel& loss, const DiscreteMeasure& mu, const NormSpec& norm,
                                 const OptimizerCertificate& a_star, std::span<const double> deltas,
                                 const SupportSpec& support = {}, const SlopeOptions& options = {});

/// Number of worker threads used by per-atom loops (WDRO_THREADS caps it).
int oracle_threads();

}  // namespace wdro
