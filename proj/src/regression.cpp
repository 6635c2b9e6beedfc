#include "wdro/applications.hpp"
#include "wdro/error.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace wdro {

RegressionMoments regression_moments(const DiscreteMeasure& data) {
  const int k = data.dim() - 1;
  if (k < 1) throw ValidationError("regression data needs at least one covariate and a label");
  RegressionMoments m{Matrix::Zero(k, k), Vector::Zero(k), 0.0};
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Vector& z = data.atom(i);
    const auto x = z.head(k);
    const double y = z[k];
    const double w = data.weight(i);
    m.D.noalias() += w * x * x.transpose();
    m.b += w * y * x;
    m.c += w * y * y;
  }
  return m;
}

namespace {

Eigen::LDLT<Matrix> factor_design(const Matrix& d) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(d);
  const Vector ev = eig.eigenvalues();
  if (!(ev.minCoeff() > 1e-12 * std::max(ev.maxCoeff(), 0.0))) {
    throw ValidationError("design matrix int x x^T is singular; the regression is not overdetermined");
  }
  return d.ldlt();
}

double quadratic_risk(const RegressionMoments& m, const Vector& a) {
  return std::max(0.0, a.dot(m.D * a) - 2.0 * m.b.dot(a) + m.c);
}

}  // namespace

ShrinkageResult sqrt_regression_shrinkage(const DiscreteMeasure& data, double s, double delta) {
  if (!(s >= 1.0)) throw ValidationError("norm exponent s must be >= 1");
  const RegressionMoments m = regression_moments(data);
  const auto ldlt = factor_design(m.D);
  ShrinkageResult r;
  r.a_star = ldlt.solve(m.b);
  r.v0 = std::max(0.0, m.c - r.a_star.dot(m.b));
  if (s == 1.0) {
    for (Eigen::Index i = 0; i < r.a_star.size(); ++i) {
      if (r.a_star[i] == 0.0) {
        throw ValidationError("s = 1 needs an OLS estimator without zero coefficients (sign(a*) is "
                              "discontinuous there); coefficient " + std::to_string(i) + " is zero");
      }
    }
  }
  const Vector h = lp_direction(r.a_star, s);
  r.beth = -std::sqrt(r.v0) * ldlt.solve(h);
  r.first_order = r.a_star + delta * r.beth;
  return r;
}

Vector exact_sqrt_regression(const DiscreteMeasure& data, double s, double delta) {
  if (!(s >= 1.0)) throw ValidationError("norm exponent s must be >= 1");
  if (!(delta >= 0.0)) throw ValidationError("delta must be >= 0");
  const RegressionMoments m = regression_moments(data);
  const auto ldlt = factor_design(m.D);
  const Vector ols = ldlt.solve(m.b);
  if (delta == 0.0) return ols;
  const auto k = m.b.size();
  // a = 0 is optimal iff the smooth part's gradient there has dual norm <= delta
  if (m.c > 0.0 && lp_norm(m.b, conjugate_exponent(s)) / std::sqrt(m.c) <= delta) return Vector::Zero(k);

  if (s == 1.0) {
    Vector a = ols;
    for (int sweep = 0; sweep < 200000; ++sweep) {
      double change = 0.0;
      for (Eigen::Index j = 0; j < k; ++j) {
        // Q(t) = alpha t^2 + 2 beta t + gamma along coordinate j
        const double alpha = m.D(j, j);
        const double beta = m.D.row(j).dot(a) - alpha * a[j] - m.b[j];
        Vector a0 = a;
        a0[j] = 0.0;
        const double gamma = quadratic_risk(m, a0);
        double t = 0.0;
        if (beta * beta > delta * delta * gamma) {
          const double kappa = std::max(0.0, alpha * gamma - beta * beta);
          const double u = (beta > 0.0 ? 1.0 : -1.0) * delta * std::sqrt(kappa / (alpha - delta * delta));
          t = (u - beta) / alpha;
        }
        change = std::max(change, std::abs(t - a[j]));
        a[j] = t;
      }
      if (change <= 1e-15 * (1.0 + a.lpNorm<Eigen::Infinity>())) return a;
    }
    throw NumericalError("square-root LASSO coordinate descent did not converge");
  }

  auto objective = [&](const Vector& a, Vector& g) {
    const double q = quadratic_risk(m, a);
    const double root = std::sqrt(q);
    g = (m.D * a - m.b) / root + delta * lp_direction(a, s);
    return root + delta * lp_norm(a, s);
  };
  QuasiNewtonOptions qn;
  qn.max_iter = 5000;
  const double scale = 1.0 + m.b.norm() / std::sqrt(std::max(m.c, 1e-300)) + delta;
  qn.grad_tol = 1e-13 * scale;
  qn.value_tol = 0.0;
  qn.stall_iterations = 5;
  Vector a = ols;
  for (int restart = 0; restart < 3; ++restart) {
    const QuasiNewtonResult r = minimize_bfgs(objective, a, qn);
    a = r.x;
    if (r.converged) break;
  }
  Vector g;
  objective(a, g);
  if (!(g.norm() <= 1e-7 * scale)) {
    std::ostringstream os;
    os << "square-root regression solver stalled with gradient norm " << g.norm();
    throw NumericalError(os.str());
  }
  return a;
}

DiscreteMeasure linear_model_sample(const Vector& beta, int n, std::uint64_t seed, double noise) {
  if (n < 1) throw ValidationError("sample size must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  const auto k = beta.size();
  std::vector<Vector> rows(static_cast<std::size_t>(n));
  for (auto& row : rows) {
    row.resize(k + 1);
    for (Eigen::Index j = 0; j < k; ++j) row[j] = normal(rng);
    row[k] = beta.dot(row.head(k)) + noise * normal(rng);
  }
  return make_empirical(rows);
}

Vector figure3_coefficients() {
  Vector b(10);
  b << 1.5, -3.0, -2.0, 0.3, -0.5, -0.7, 0.2, 0.5, 1.2, 0.8;
  return b;
}

double nn_robustness(const nlohmann::json& architecture, const Vector& params, const DiscreteMeasure& data,
                     const NormSpec& norm) {
  const LossModel loss = builtin_loss("nn", architecture);
  if (params.size() != loss.action_dim()) {
    throw ValidationError("network expects " + std::to_string(loss.action_dim()) + " parameters, got " +
                          std::to_string(params.size()));
  }
  OptimizerCertificate cert;
  cert.action = params;
  const OptimizerCertificate certs[] = {cert};
  return upsilon(loss, data, norm, certs).upsilon;
}

}  // namespace wdro
