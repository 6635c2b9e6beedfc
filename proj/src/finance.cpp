#include "wdro/applications.hpp"
#include "wdro/error.hpp"

#include <cmath>

namespace wdro {

namespace {

void check_spec(const BlackScholesSpec& s) {
  if (!(s.S0 > 0.0 && s.K > 0.0 && s.T > 0.0 && s.sigma > 0.0)) {
    throw ValidationError("Black-Scholes parameters S0, K, T, sigma must be positive");
  }
}

}  // namespace

double bs_d_minus(const BlackScholesSpec& s) {
  check_spec(s);
  const double vol = s.sigma * std::sqrt(s.T);
  return (std::log(s.S0 / s.K) - 0.5 * vol * vol) / vol;
}

double bs_call_price(const BlackScholesSpec& s) {
  const double dm = bs_d_minus(s);
  const double dp = dm + s.sigma * std::sqrt(s.T);
  return s.S0 * normal_cdf(dp) - s.K * normal_cdf(dm);
}

double bs_call_upsilon(const BlackScholesSpec& s) {
  const double mk = normal_cdf(bs_d_minus(s));
  return s.S0 * std::sqrt(mk * (1.0 - mk));
}

double bs_vega(const BlackScholesSpec& s) {
  return s.S0 * normal_pdf(bs_d_minus(s) + s.sigma * std::sqrt(s.T));
}

DiscreteMeasure lognormal_returns(const BlackScholesSpec& s, int atoms) {
  check_spec(s);
  if (atoms < 1) throw ValidationError("lognormal discretization needs at least one atom");
  const double vol = s.sigma * std::sqrt(s.T);
  const auto n = static_cast<std::size_t>(atoms);
  std::vector<Vector> xs(n);
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    const double x = std::exp(-0.5 * vol * vol + vol * normal_quantile(u));
    xs[i] = Vector::Constant(1, x);
    mean += x;
  }
  mean /= static_cast<double>(n);
  for (auto& x : xs) x /= mean;
  return make_empirical(xs);
}

double call_upsilon_empirical(const DiscreteMeasure& mu, double S0, double K) {
  if (mu.dim() != 1) throw ValidationError("call sensitivity needs a 1-d measure of gross returns");
  if (!(S0 > 0.0)) throw ValidationError("S0 must be positive");
  const double k = K / S0;
  double mk = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (mu.atom(i)[0] >= k) mk += mu.weight(i);
  }
  mk = std::min(mk, 1.0);
  return S0 * std::sqrt(mk * (1.0 - mk));
}

double robust_call_price(const DiscreteMeasure& mu, double S0, double K, double delta,
                         const OracleOptions& options) {
  if (mu.dim() != 1) throw ValidationError("robust call price needs a 1-d measure of gross returns");
  const LossModel loss = builtin_loss("call", {{"S0", S0}, {"K", K}});
  const ConstraintSet martingale = ConstraintSet::martingale(mu.mean());
  return eval_dual_constrained(loss, mu, NormSpec::euclidean(1), delta, Vector::Zero(1), martingale, {},
                               options)
      .value;
}

double avar_upsilon(const Vector& z, double alpha, double p) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("AV@R level alpha must lie in (0,1)");
  if (!(p >= 1.0)) throw ValidationError("p must be >= 1");
  return z.norm() / std::pow(alpha, 1.0 / p);
}

SensitivityReport oce_sensitivities(const nlohmann::json& l, const nlohmann::json& g, const DiscreteMeasure& mu,
                                    const NormSpec& norm, double a0) {
  const LossModel loss = builtin_loss("oce", {{"l", l}, {"g", g}});
  const OptimizerCertificate cert = solve_base_problem(loss, mu, Vector::Constant(1, a0));
  const OptimizerCertificate certs[] = {cert};
  SensitivityReport rep = upsilon(loss, mu, norm, certs);
  const Matrix h = base_hessian(loss, mu, cert.action);
  if (h(0, 0) == 0.0) {
    // l'' = 0 mu-a.e.: the numerator carries the same factor
    Vector num = Vector::Zero(1);
    for (std::size_t i = 0; i < mu.size(); ++i) {
      num += mu.weight(i) * loss.cross(mu.atom(i), cert.action) * h_map(norm, loss.grad_x(mu.atom(i), cert.action));
    }
    if (num.norm() != 0.0) throw NumericalError("int l'' dmu = 0 while the sensitivity numerator is not");
    rep.hessian = h;
    rep.beth_numerator = num;
    rep.beth = Vector::Zero(1);
    return rep;
  }
  SensitivityReport full = beth(loss, mu, norm, cert);
  return full;
}

}  // namespace wdro
