#include "wdro/applications.hpp"
#include "wdro/error.hpp"

#include <cmath>
#include <random>

namespace wdro {

namespace {

DiscreteMeasure draw(const CltStudyConfig& c, int n, std::uint64_t seed) {
  if (c.sampler == "gaussian") {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(c.mean, c.sd);
    std::vector<Vector> xs(static_cast<std::size_t>(n), Vector(1));
    for (auto& x : xs) x[0] = normal(rng);
    return make_empirical(xs);
  }
  return linear_model_sample(c.beta, n, seed, c.sd);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

bool x_only_norm(const NormSpec& norm, int k) {
  const auto& act = norm.active();
  if (static_cast<int>(act.size()) != k) return false;
  for (int j = 0; j < k; ++j) {
    if (act[static_cast<std::size_t>(j)] != j) return false;
  }
  return true;
}

}  // namespace

CltReport clt_study(const CltStudyConfig& config, const LossModel& loss, const NormSpec& norm) {
  if (config.sampler != "gaussian" && config.sampler != "linear-model") {
    throw ValidationError("unknown sampler '" + config.sampler + "' (expected gaussian or linear-model)");
  }
  if (config.n < 2 || config.replications < 2) throw ValidationError("need n >= 2 and replications >= 2");
  if (!(config.sd > 0.0)) throw ValidationError("sd must be > 0");
  const bool gaussian = config.sampler == "gaussian";
  const int d = gaussian ? 1 : static_cast<int>(config.beta.size()) + 1;
  if (!gaussian && config.beta.size() == 0) throw ValidationError("linear-model sampler needs beta");
  if (loss.state_dim() != d || norm.dim() != d) throw ValidationError("loss, norm and sampler dimensions differ");

  const bool tracking = gaussian && loss.name() == "quadratic-tracking";
  const bool regression = !gaussian && loss.name() == "sqrt-regression" &&
                          x_only_norm(norm, d - 1) && loss.action_dim() == d - 1;

  const DiscreteMeasure ref = draw(config, config.reference_size, mix_seed(config.seed, 0));
  const int k = loss.action_dim();

  CltReport rep;
  rep.n = config.n;
  rep.replications = config.replications;
  rep.delta = 1.0 / std::sqrt(static_cast<double>(config.n));
  if (tracking) {
    rep.a_true = Vector::Constant(1, config.mean);
  } else if (regression) {
    rep.a_true = config.beta;
  } else {
    rep.a_true = solve_base_problem(loss, ref, Vector::Zero(k)).action;
  }

  // exact V(0, .) for the known pairs, reference otherwise
  auto oos_value = [&](const Vector& a) {
    if (tracking) return (a[0] - config.mean) * (a[0] - config.mean) + config.sd * config.sd;
    if (regression) return (a - config.beta).squaredNorm() + config.sd * config.sd;
    return base_value(loss, ref, a);
  };

  // sensitivities at the reference optimizer, where the first-order condition holds exactly
  const OptimizerCertificate ref_opt = solve_base_problem(loss, ref, rep.a_true);
  const SensitivityReport sens = beth(loss, ref, norm, ref_opt);
  rep.predicted_mean = *sens.beth;
  const Matrix H = sens.hessian;
  Vector gmean = Vector::Zero(k);
  Matrix gcov = Matrix::Zero(k, k);
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const Vector g = loss.grad_a(ref.atom(i), ref_opt.action);
    gmean += ref.weight(i) * g;
    gcov.noalias() += ref.weight(i) * g * g.transpose();
  }
  gcov -= gmean * gmean.transpose();
  const auto ldlt = H.ldlt();
  rep.predicted_covariance = ldlt.solve(ldlt.solve(gcov).transpose());
  rep.oos_predicted = 0.5 * ((H * rep.predicted_covariance).trace() +
                             rep.predicted_mean.dot(H * rep.predicted_mean));

  const int m = config.replications;
  std::vector<Vector> errs(static_cast<std::size_t>(m));
  std::vector<double> oos(static_cast<std::size_t>(m), 0.0);
  std::vector<char> ok(static_cast<std::size_t>(m), 0);
  const double v_true = oos_value(rep.a_true);
  const double root_n = std::sqrt(static_cast<double>(config.n));
  const int threads = oracle_threads();
#pragma omp parallel for schedule(dynamic) num_threads(threads) if (threads > 1)
  for (int r = 0; r < m; ++r) {
    try {
      const DiscreteMeasure sample = draw(config, config.n, mix_seed(config.seed, static_cast<std::uint64_t>(r) + 1));
      Vector a;
      if (tracking) {
        a = sample.mean();
      } else if (regression) {
        a = exact_sqrt_regression(sample, norm.s(), rep.delta);
      } else {
        const Vector a0 = solve_base_problem(loss, sample, rep.a_true).action;
        a = robust_optimize(loss, sample, norm, rep.delta, a0).action;
      }
      errs[static_cast<std::size_t>(r)] = root_n * (a - rep.a_true);
      oos[static_cast<std::size_t>(r)] = config.n * (oos_value(a) - v_true);
      ok[static_cast<std::size_t>(r)] = 1;
    } catch (const Error&) {
    }
  }

  rep.empirical_mean = Vector::Zero(k);
  int good = 0;
  for (int r = 0; r < m; ++r) {
    if (!ok[static_cast<std::size_t>(r)]) continue;
    rep.scaled_errors.push_back(errs[static_cast<std::size_t>(r)]);
    rep.empirical_mean += errs[static_cast<std::size_t>(r)];
    rep.oos_empirical += oos[static_cast<std::size_t>(r)];
    ++good;
  }
  rep.failures = m - good;
  if (good < 2) throw NumericalError("fewer than two replications succeeded");
  rep.empirical_mean /= good;
  rep.oos_empirical /= good;
  rep.empirical_covariance = Matrix::Zero(k, k);
  for (const auto& e : rep.scaled_errors) {
    const Vector c = e - rep.empirical_mean;
    rep.empirical_covariance.noalias() += c * c.transpose();
  }
  rep.empirical_covariance /= (good - 1);
  rep.standard_error = (rep.empirical_covariance.diagonal().array() / good).sqrt().matrix();
  return rep;
}

nlohmann::json clt_report_to_json(const CltReport& r) {
  auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  auto mat = [&](const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vec(m.row(i).transpose()));
    return rows;
  };
  nlohmann::json j;
  j["n"] = r.n;
  j["replications"] = r.replications;
  j["failures"] = r.failures;
  j["delta"] = r.delta;
  j["a_true"] = vec(r.a_true);
  j["empirical_mean"] = vec(r.empirical_mean);
  j["standard_error"] = vec(r.standard_error);
  j["predicted_mean"] = vec(r.predicted_mean);
  j["empirical_covariance"] = mat(r.empirical_covariance);
  j["predicted_covariance"] = mat(r.predicted_covariance);
  j["oos_empirical"] = r.oos_empirical;
  j["oos_predicted"] = r.oos_predicted;
  return j;
}

}  // namespace wdro
