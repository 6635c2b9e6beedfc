#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <span>
#include <vector>

namespace wdro {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// l^s helpers. s may be +infinity (max-norm); s = 1 is the absolute sum.

double lp_norm(const Vector& v, double s);

/// Unit dual-norm direction of v for the l^s norm: the vector u with
/// <v,u> = |v|_s and |u|_r = 1 (1/r + 1/s = 1). For s = 1 this is sign(v);
/// for s = infinity a one-hot sign on the first maximal coordinate.
/// Returns the zero vector for v = 0.
Vector lp_direction(const Vector& v, double s);

/// Conjugate exponent of s (1 -> inf, inf -> 1).
double conjugate_exponent(double s);

// ---------------------------------------------------------------------------
// Normal distribution.

double normal_cdf(double x);
double normal_pdf(double x);
double normal_quantile(double u);

// ---------------------------------------------------------------------------
// One-dimensional minimization.

struct ScalarMin {
  double x = 0.0;
  double value = 0.0;
  int evaluations = 0;
};

/// Golden-section search on [lo, hi]; assumes f unimodal there.
ScalarMin golden_section(const std::function<double(double)>& f, double lo, double hi,
                         double x_tol, int max_iter = 200);

/// Golden-section search after growing the bracket geometrically around x0
/// until the function increases on both sides.
ScalarMin golden_section_unbounded(const std::function<double(double)>& f, double x0,
                                   double initial_step, double x_tol, int max_iter = 200);

// ---------------------------------------------------------------------------
// Quasi-Newton minimization.

struct QuasiNewtonOptions {
  int max_iter = 500;
  double grad_tol = 1e-10;
  /// Stop once the objective improves by less than this (relative) for
  /// `stall_iterations` consecutive steps.
  double value_tol = 1e-15;
  int stall_iterations = 3;
  /// Iterates beyond this Euclidean radius are reported as divergent.
  double divergence_radius = 1e12;
  /// Optional projection applied to every trial point (projected descent).
  std::function<void(Vector&)> project;
  /// Optional initial inverse Hessian.
  Matrix initial_inverse_hessian;
};

struct QuasiNewtonResult {
  Vector x;
  double value = 0.0;
  Vector gradient;
  int iterations = 0;
  bool converged = false;
  bool diverged = false;
};

/// Objective returning f(x) and writing its gradient into the second argument.
using ValueAndGradient = std::function<double(const Vector&, Vector&)>;

/// BFGS with an expanding/backtracking Armijo line search. With a
/// projection set, runs projected gradient steps instead (BFGS curvature is
/// not maintained across active-set changes).
QuasiNewtonResult minimize_bfgs(const ValueAndGradient& f, const Vector& x0,
                                const QuasiNewtonOptions& options = {});

// ---------------------------------------------------------------------------
// Extrapolation.

/// Neville polynomial extrapolation of samples (h_i, y_i) to h = 0.
/// Returns the full tableau diagonal; back() is the highest-order estimate.
std::vector<double> neville_to_zero(std::span<const double> h, std::span<const double> y);

// ---------------------------------------------------------------------------
// Finite differences.

/// Central-difference step used throughout: 1e-5 * (1 + |x|).
inline double fd_step(double x) { return 1e-5 * (1.0 + std::abs(x)); }

Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& x);
Matrix fd_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& x);

}  // namespace wdro
