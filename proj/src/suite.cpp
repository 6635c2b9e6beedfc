#include "wdro/suite.hpp"
#include "wdro/applications.hpp"
#include "wdro/error.hpp"
#include "wdro/sensitivity.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace wdro {

using nlohmann::json;

std::vector<std::string> suite_problem_ids() {
  return {"linear", "quadratic-tracking", "oce-quadratic", "hedging", "regression", "smooth-call"};
}

namespace {

DiscreteMeasure gaussian_sample(int n, int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<Vector> xs(static_cast<std::size_t>(n), Vector(d));
  for (auto& x : xs) {
    for (int j = 0; j < d; ++j) x[j] = normal(rng);
  }
  return make_empirical(xs);
}

// gross returns exp(sigma Z - sigma^2/2)
DiscreteMeasure return_sample(int n, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<Vector> xs(static_cast<std::size_t>(n), Vector(1));
  for (auto& x : xs) x[0] = std::exp(sigma * normal(rng) - 0.5 * sigma * sigma);
  return make_empirical(xs);
}

}  // namespace

SuiteProblem suite_problem(const std::string& id, std::uint64_t seed, double p) {
  if (id == "linear") {
    auto mu = gaussian_sample(60, 2, seed);
    return {id, builtin_loss("linear", {{"c", {1.0, -2.0}}, {"b", 0.5}}), mu, NormSpec(2, 2.0, p), {}, Vector::Zero(1)};
  }
  if (id == "quadratic-tracking") {
    auto mu = gaussian_sample(80, 1, seed);
    return {id, builtin_loss("quadratic-tracking"), mu, NormSpec(1, 2.0, p), {}, Vector::Zero(1)};
  }
  if (id == "oce-quadratic") {
    auto mu = gaussian_sample(60, 1, seed);
    return {id, builtin_loss("oce", {{"l", "quadratic"}, {"g", "identity"}}), mu, NormSpec(1, 2.0, p), {},
            Vector::Zero(1)};
  }
  if (id == "hedging") {
    auto mu = return_sample(60, 0.5, seed);
    const double x0 = mu.mean()[0];
    json params = {{"l", "quadratic"}, {"g", {{"id", "smooth-call"}, {"K", 1.0}, {"beta", 10.0}}}, {"x0", {x0}}};
    return {id, builtin_loss("hedging", params), mu, NormSpec(1, 2.0, p), {}, Vector::Zero(1)};
  }
  if (id == "regression") {
    Vector beta(2);
    beta << 1.0, -0.5;
    auto mu = linear_model_sample(beta, 80, seed, 0.5);
    return {id, builtin_loss("sqrt-regression", {{"k", 2}}), mu, NormSpec(3, 2.0, p, {0, 1}), {}, Vector::Zero(2)};
  }
  if (id == "smooth-call") {
    auto mu = return_sample(60, 0.2, seed);
    return {id, builtin_loss("smooth-call", {{"K", 1.0}, {"beta", 10.0}}), mu, NormSpec(1, 2.0, p), {},
            Vector::Zero(1)};
  }
  std::ostringstream os;
  os << "unknown validation problem '" << id << "'; known:";
  for (const auto& k : suite_problem_ids()) os << " " << k;
  throw ValidationError(os.str());
}

std::vector<ValidationRow> run_validation(const LossModel& loss, const DiscreteMeasure& mu, const NormSpec& norm,
                                          const SupportSpec& support, const Vector& a0,
                                          std::span<const double> deltas, const SlopeOptions& options) {
  const OptimizerCertificate a_star = solve_base_problem(loss, mu, a0);
  const OptimizerCertificate certs[] = {a_star};
  std::vector<ValidationRow> rows;

  const double ups = upsilon(loss, mu, norm, certs).upsilon;
  const SlopeEstimate vs = fd_value_slope(loss, mu, norm, a_star, deltas, support, options);
  {
    ValidationRow r{"upsilon", ups, vs.estimate[0], 0.0, 0.02, false};
    r.gap = std::abs(r.oracle - r.formula) / std::max(r.formula, 1e-12);
    r.pass = r.gap <= r.threshold;
    rows.push_back(r);
  }

  const SensitivityReport br = beth(loss, mu, norm, a_star);
  const SlopeEstimate os = fd_optimizer_slope(loss, mu, norm, a_star, deltas, support, options);
  for (Eigen::Index i = 0; i < br.beth->size(); ++i) {
    const double scale = 1.0 + br.beth->lpNorm<Eigen::Infinity>();
    ValidationRow r{"beth[" + std::to_string(i) + "]", (*br.beth)[i], os.estimate[i], 0.0, 0.05, false};
    r.gap = std::abs(r.oracle - r.formula) / scale;
    r.pass = r.gap <= r.threshold;
    rows.push_back(r);
  }

  for (std::size_t k = 0; k < deltas.size(); ++k) {
    const double d = deltas[k];
    const double dual = vs.values[k];
    const double lower = eval_primal_lowerbound(loss, mu, norm, d, vs.actions[k], support);
    std::ostringstream name;
    name << "bracket@" << d;
    ValidationRow r{name.str(), dual, lower, 0.0, 1e-7, false};
    r.gap = std::max(0.0, lower - dual) / (1.0 + std::abs(dual));
    r.pass = r.gap <= r.threshold;
    rows.push_back(r);
  }
  return rows;
}

}  // namespace wdro
