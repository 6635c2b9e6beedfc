#include "support.hpp"
#include "wdro/applications.hpp"
#include "wdro/error.hpp"
#include "wdro/numerics.hpp"
#include "wdro/oracle.hpp"

#include <doctest.h>

using namespace wdro;
using namespace wdro::testing;
using nlohmann::json;

namespace {

double phi_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

OptimizerCertificate at(const Vector& a) {
  OptimizerCertificate c;
  c.action = a;
  return c;
}

// Rows (x, y) with X^T X = I (orthonormal columns) and y = X beta + noise.
DiscreteMeasure orthonormal_design(std::mt19937_64& rng, int n, int k) {
  Matrix x(n, k);
  for (int i = 0; i < n; ++i) x.row(i) = random_vector(rng, k).transpose();
  const Matrix q = Eigen::HouseholderQR<Matrix>(x).householderQ() * Matrix::Identity(n, k);
  const Vector beta = random_vector(rng, k, 2.0);
  const Vector y = q * beta + 0.3 * random_vector(rng, n);
  std::vector<Vector> rows;
  for (int i = 0; i < n; ++i) {
    Vector z(k + 1);
    z.head(k) = q.row(i).transpose();
    z[k] = y[i];
    rows.push_back(z);
  }
  return make_empirical(rows);
}

double sqrt_objective(const DiscreteMeasure& data, const Vector& a, double s, double delta) {
  const int k = data.dim() - 1;
  double mse = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double r = data.atom(i)[k] - data.atom(i).head(k).dot(a);
    mse += data.weight(i) * r * r;
  }
  return std::sqrt(mse) + delta * lp_norm(a, s);
}

}  // namespace

TEST_SUITE("applications") {
  TEST_CASE("Black-Scholes closed forms") {
    BlackScholesSpec bs;
    const double dm = (std::log(1.0 / 1.2) - 0.02) / 0.2;
    CHECK(bs_d_minus(bs) == doctest::Approx(dm).epsilon(1e-14));
    CHECK(std::abs(bs_d_minus(bs) - (-1.01161)) <= 5e-6);
    const double mk = phi_cdf(dm);
    CHECK(std::abs(bs_call_upsilon(bs) - std::sqrt(mk * (1.0 - mk))) <= 1e-12);
    CHECK(std::abs(bs_call_upsilon(bs) - 0.3628) <= 1e-4);
    const double vega = std::exp(-0.5 * (dm + 0.2) * (dm + 0.2)) / std::sqrt(2.0 * M_PI);
    CHECK(std::abs(bs_vega(bs) - vega) <= 1e-12);
    CHECK(std::abs(bs_vega(bs) - 0.2870) <= 1e-4);
    CHECK(bs_call_price(bs) == doctest::Approx(phi_cdf(dm + 0.2) - 1.2 * mk).epsilon(1e-12));
  }

  TEST_CASE("Black-Scholes limits") {
    BlackScholesSpec bs;
    bs.K = 1e-8;
    CHECK(bs_call_upsilon(bs) <= 1e-6);
    bs.K = std::exp(-0.5 * 0.04);
    CHECK(bs_call_upsilon(bs) == doctest::Approx(0.5).epsilon(1e-12));
    bs.K = std::exp(0.5 * 0.04);
    CHECK(bs_vega(bs) == doctest::Approx(1.0 / std::sqrt(2.0 * M_PI)).epsilon(1e-12));
    bs.K = 50.0;
    CHECK(bs_vega(bs) <= 1e-12);
    bs.sigma = -1.0;
    CHECK_THROWS_AS(bs_call_upsilon(bs), ValidationError);
  }

  TEST_CASE("Black-Scholes value sensitivity is unimodal in the strike with peak S0/2") {
    double best = 0.0, best_k = 0.0;
    int turns = 0;
    double prev = -1.0, prev_slope = 1.0;
    for (int i = 0; i <= 2000; ++i) {
      BlackScholesSpec bs;
      bs.K = 0.5 + i * 0.0005;
      const double u = bs_call_upsilon(bs);
      if (prev >= 0.0) {
        const double slope = u - prev;
        if (slope * prev_slope < 0.0) ++turns;
        prev_slope = slope;
      }
      prev = u;
      if (u > best) best = u, best_k = bs.K;
    }
    CHECK(turns == 1);
    CHECK(best == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(best_k == doctest::Approx(std::exp(-0.02)).epsilon(1e-3));
  }

  TEST_CASE("lognormal discretization") {
    BlackScholesSpec bs;
    const auto mu = lognormal_returns(bs, 100000);
    CHECK(std::abs(mu.mean()[0] - 1.0) <= 1e-4);
    CHECK(rel_gap(call_upsilon_empirical(mu, 1.0, 1.2), bs_call_upsilon(bs)) <= 0.005);
  }

  TEST_CASE("empirical call sensitivity") {
    const auto mu = atoms_1d({0.8, 1.0, 1.2, 1.4});
    CHECK(std::abs(call_upsilon_empirical(mu, 1.0, 1.1) - 0.5) <= 1e-12);
    CHECK(std::abs(call_upsilon_empirical(mu, 2.0, 2.2) - 1.0) <= 1e-12);
    CHECK(call_upsilon_empirical(mu, 1.0, 1.5) == 0.0);
    // the closed set [k, inf) includes an atom sitting at k
    const auto edge = atoms_1d({1.0, 1.1});
    CHECK(std::abs(call_upsilon_empirical(edge, 1.0, 1.1) - 0.5) <= 1e-12);
    std::mt19937_64 rng(1);
    CHECK_THROWS_AS(call_upsilon_empirical(random_measure(rng, 3, 2), 1.0, 1.0), ValidationError);
  }

  TEST_CASE("robust Black-Scholes value lies above its first-order tangent") {
    BlackScholesSpec bs;
    const auto mu = lognormal_returns(bs, 40);
    const double v0 = robust_call_price(mu, 1.0, 1.2, 0.0);
    const double u = call_upsilon_empirical(mu, 1.0, 1.2);
    CHECK(v0 == doctest::Approx(mu.integrate([](const Vector& x) { return std::max(x[0] - 1.2, 0.0); })).epsilon(1e-14));
    for (double d : {0.01, 0.05}) CHECK(robust_call_price(mu, 1.0, 1.2, d) >= v0 + u * d - 1e-9);
  }

  TEST_CASE("AV@R closed form") {
    CHECK(avar_upsilon(Vector::Constant(1, 1.0), 0.04, 2.0) == doctest::Approx(5.0).epsilon(1e-14));
    CHECK(avar_upsilon((Vector(2) << 0.6, 0.8).finished(), 1.0 - 1e-12, 2.0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(avar_upsilon(Vector::Zero(3), 0.1, 2.0) == 0.0);
    CHECK_THROWS_AS(avar_upsilon(Vector::Ones(1), 1.5, 2.0), ValidationError);
    CHECK_THROWS_AS(avar_upsilon(Vector::Ones(1), 0.0, 2.0), ValidationError);
  }

  TEST_CASE("OCE sensitivities") {
    // l quadratic, g identity: a* = E x = 0 and grad_x f = 1 + x
    const auto pm = atoms_1d({-0.5, 0.5});
    const NormSpec n = NormSpec::euclidean(1);
    const auto rep = oce_sensitivities("quadratic", "identity", pm, n);
    CHECK(std::abs(rep.action[0]) <= 1e-12);
    CHECK(rep.upsilon == doctest::Approx(std::sqrt(1.25)).epsilon(1e-12));
    // grad_x f vanishes on the atom -1 while the cross term does not
    CHECK_THROWS_AS(oce_sensitivities("quadratic", "identity", atoms_1d({-1.0, 1.0}), n), ValidationError);
    // linear l: upsilon is the L^q norm of grad g and beth is 0
    std::mt19937_64 rng(3);
    const auto mu = random_measure(rng, 10, 2);
    const json g = {{"id", "linear"}, {"c", {1.0, 2.0}}};
    const auto lin = oce_sensitivities("linear", g, mu, NormSpec(2, 2.0, 3.0));
    CHECK(lin.upsilon == doctest::Approx(std::sqrt(5.0)).epsilon(1e-12));
    REQUIRE(lin.beth.has_value());
    CHECK((*lin.beth)[0] == 0.0);
  }

  TEST_CASE("hedging sensitivity follows the l'(g + <a, x - x0>)(grad g + a) integrand") {
    std::mt19937_64 rng(15);
    std::vector<Vector> xs;
    for (int i = 0; i < 30; ++i) xs.push_back(Vector::Constant(1, std::exp(0.3 * random_vector(rng, 1)[0])));
    const auto mu = make_empirical(xs);
    const double x0 = mu.mean()[0];
    const auto f = builtin_loss("hedging", {{"l", "quadratic"}, {"g", {{"id", "smooth-call"}, {"beta", 8.0}}}, {"x0", {x0}}});
    const auto cert = solve_base_problem(f, mu, Vector::Zero(1));
    const double a = cert.action[0];
    double acc = 0.0;
    for (const auto& x : xs) {
      const double z = 8.0 * (x[0] - 1.0);
      const double g = (z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z))) / 8.0;
      const double dg = 1.0 / (1.0 + std::exp(-z));
      const double y = g + a * (x[0] - x0);
      acc += std::pow((1.0 + y) * (dg + a), 2.0) / 30.0;
    }
    const OptimizerCertificate c[] = {cert};
    CHECK(upsilon(f, mu, NormSpec::euclidean(1), c).upsilon == doctest::Approx(std::sqrt(acc)).epsilon(1e-10));
  }

  TEST_CASE("orthonormal design closed forms") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 10; ++trial) {
      const int n = 50, k = 4;
      const auto data = orthonormal_design(rng, n, k);
      Vector y(n);
      for (int i = 0; i < n; ++i) y[i] = data.atom(static_cast<std::size_t>(i))[k];
      const double delta = 0.01;
      const auto s2 = sqrt_regression_shrinkage(data, 2.0, delta);
      const Vector a = s2.a_star;
      const double r2 = a.squaredNorm() / y.squaredNorm();
      const Vector expect2 = a * (1.0 - delta * std::sqrt(n * (1.0 / r2 - 1.0)));
      CHECK((s2.first_order - expect2).lpNorm<Eigen::Infinity>() <= 1e-10);
      const auto s1 = sqrt_regression_shrinkage(data, 1.0, delta);
      const Vector sign = a.array().sign().matrix();
      const Vector expect1 = a - std::sqrt(static_cast<double>(n)) * y.norm() * std::sqrt(1.0 - r2) * sign * delta;
      CHECK((s1.first_order - expect1).lpNorm<Eigen::Infinity>() <= 1e-10);
    }
  }

  TEST_CASE("shrinkage direction on 100 random independent-covariate datasets") {
    int failures = 0;
    for (int trial = 0; trial < 100; ++trial) {
      std::mt19937_64 rng(5000 + trial);
      const Vector beta = random_vector(rng, 5, 2.0);
      const auto data = linear_model_sample(beta, 400, 9000 + trial);
      const auto s1 = sqrt_regression_shrinkage(data, 1.0, 0.05);
      for (Eigen::Index i = 0; i < beta.size(); ++i) {
        const double a = s1.a_star[i];
        if ((a > 0 ? 1.0 : -1.0) * (s1.first_order[i] - a) > 0.0) ++failures;
      }
      // s = 2 on an orthonormal design: an exact scalar multiple of a*
      const auto ortho = orthonormal_design(rng, 30, 3);
      const auto s2 = sqrt_regression_shrinkage(ortho, 2.0, 0.05);
      const double ratio = s2.first_order.dot(s2.a_star) / s2.a_star.squaredNorm();
      if ((s2.first_order - ratio * s2.a_star).norm() > 1e-12 * s2.a_star.norm()) ++failures;
    }
    CHECK(failures == 0);
  }

  TEST_CASE("shrinkage input validation") {
    std::vector<Vector> rows(10, Vector::Zero(3));
    for (int i = 0; i < 10; ++i) rows[static_cast<std::size_t>(i)] << 1.0, 1.0, i;
    CHECK_THROWS_AS(sqrt_regression_shrinkage(make_empirical(rows), 2.0, 0.1), ValidationError);
    // y = x_1 exactly: the second OLS coefficient is exactly 0
    std::vector<Vector> zero;
    for (double u : {-1.0, 1.0}) {
      for (double v : {-1.0, 1.0}) zero.push_back((Vector(3) << u, v, u).finished());
    }
    CHECK_THROWS_AS(sqrt_regression_shrinkage(make_empirical(zero), 1.0, 0.1), ValidationError);
  }

  TEST_CASE("exact square-root regression") {
    Vector beta(3);
    beta << 1.0, -2.0, 0.5;
    const auto data = linear_model_sample(beta, 200, 4);
    const auto ols = sqrt_regression_shrinkage(data, 2.0, 0.0).a_star;
    CHECK((exact_sqrt_regression(data, 1.0, 0.0) - ols).norm() <= 1e-12);
    CHECK(exact_sqrt_regression(data, 1.0, 50.0).norm() == 0.0);
    CHECK(exact_sqrt_regression(data, 2.0, 50.0).norm() == 0.0);
    // optimality against random perturbations of the returned point
    std::mt19937_64 rng(8);
    for (double s : {1.0, 1.5, 2.0, 3.0}) {
      for (double d : {0.05, 0.3}) {
        const Vector a = exact_sqrt_regression(data, s, d);
        const double v = sqrt_objective(data, a, s, d);
        int worse = 0;
        for (int t = 0; t < 200; ++t) {
          if (sqrt_objective(data, a + random_vector(rng, 3, 1e-4), s, d) < v - 1e-13) ++worse;
        }
        INFO("s = " << s << ", delta = " << d);
        CHECK(worse == 0);
      }
    }
  }

  TEST_CASE("shrinkage benchmark recipe") {
    const auto data = linear_model_sample(figure3_coefficients(), 2000, 1);
    CHECK(data.size() == 2000);
    CHECK(data.dim() == 11);
    const auto again = linear_model_sample(figure3_coefficients(), 2000, 1);
    CHECK(again.atom(1999) == data.atom(1999));
  }

  TEST_CASE("network robustness") {
    std::mt19937_64 rng(2);
    std::vector<Vector> rows;
    for (int i = 0; i < 30; ++i) rows.push_back(random_vector(rng, 2));
    const auto data = make_empirical(rows);
    const json arch = {{"input_dim", 1}, {"hidden", 4}, {"output_dim", 1}};
    // zero network: only the label gradient 2y survives
    double y2 = 0.0;
    for (const auto& z : rows) y2 += z[1] * z[1] / 30.0;
    CHECK(nn_robustness(arch, Vector::Zero(13), data, NormSpec::euclidean(2)) == doctest::Approx(2.0 * std::sqrt(y2)).epsilon(1e-12));
    CHECK_THROWS_AS(nn_robustness(arch, Vector::Zero(3), data, NormSpec::euclidean(2)), ValidationError);
    CHECK_THROWS_AS(builtin_loss("nn", {{"activation", "relu"}}), ValidationError);
    // a linear network reproduces the regression integrand
    const json lin = {{"input_dim", 1}, {"hidden", 1}, {"output_dim", 1}, {"activation", "identity"}};
    const Vector params = (Vector(4) << 0.7, 0.0, 1.3, 0.0).finished();
    const auto reg = builtin_loss("sqrt-regression", {{"k", 1}});
    const OptimizerCertificate c[] = {at(Vector::Constant(1, 0.7 * 1.3))};
    CHECK(std::abs(nn_robustness(lin, params, data, NormSpec::euclidean(2)) -
                   upsilon(reg, data, NormSpec::euclidean(2), c).upsilon) <= 1e-10);
  }

  TEST_CASE("trained toy network: robustness metric matches the oracle slope") {
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    std::normal_distribution<double> noise(0.0, 0.1);
    std::vector<Vector> rows;
    for (int i = 0; i < 200; ++i) {
      const double x = u(rng);
      rows.push_back((Vector(2) << x, std::sin(x) + noise(rng)).finished());
    }
    const auto data = make_empirical(rows);
    const json arch = {{"input_dim", 1}, {"hidden", 8}, {"output_dim", 1}};
    const auto f = builtin_loss("nn", arch);
    const auto cert = solve_base_problem(f, data, 0.5 * random_vector(rng, f.action_dim()), {1e-2, 5000});
    const double metric = nn_robustness(arch, cert.action, data, NormSpec::euclidean(2));
    SlopeOptions so;
    so.fixed_action = true;
    const std::vector<double> grid = {0.02, 0.01, 0.005};
    const auto s = fd_value_slope(f, data, NormSpec::euclidean(2), cert, grid, {}, so);
    CHECK(rel_gap(s.estimate[0], metric) <= 0.03);
  }

  TEST_CASE("distance-to-set expansion") {
    const auto g = SmoothMap::affine(Matrix::Identity(2, 2), Vector::Zero(2));
    const auto ball = ProjectionSet::ball(Vector::Zero(2), 1.0);
    const DiscreteMeasure mu({(Vector(2) << 2.0, 0.0).finished(), Vector::Zero(2)}, {0.5, 0.5});
    const auto ex = uq_first_order(g, ball, mu, NormSpec::euclidean(2), 0.1);
    CHECK(ex.base == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(ex.slope == doctest::Approx(std::sqrt(0.5)).epsilon(1e-14));
    CHECK(ex.first_order == doctest::Approx(0.5 - 0.1 * std::sqrt(0.5)).epsilon(1e-14));
    // oracle on -d: inf over the ball of int d = -sup of int (-d)
    const auto neg = scale_loss(distance_loss(g, ball), -1.0);
    const std::vector<double> grid = {0.04, 0.02, 0.01};
    std::vector<double> secants;
    for (double d : grid) {
      secants.push_back((eval_dual(neg, mu, NormSpec::euclidean(2), d, Vector::Zero(1)).value + ex.base) / d);
    }
    for (double s : secants) CHECK(rel_gap(s, ex.slope) <= 0.02);

    // G = c id: slope c mu(G(x) outside E)^(1/q)
    const double c = 2.5;
    const auto gc = SmoothMap::affine(c * Matrix::Identity(2, 2), Vector::Zero(2));
    const auto box = ProjectionSet::box(Vector::Constant(2, -1.0), Vector::Constant(2, 1.0));
    const DiscreteMeasure m3({(Vector(2) << 2.0, 0.1).finished(), (Vector(2) << 0.1, 0.1).finished(),
                              (Vector(2) << -3.0, 1.0).finished()},
                             {0.2, 0.5, 0.3});
    CHECK(uq_first_order(gc, box, m3, NormSpec(2, 2.0, 3.0), 0.1).slope ==
          doctest::Approx(c * std::pow(0.5, 2.0 / 3.0)).epsilon(1e-12));
    const DiscreteMeasure inside({(Vector(2) << 0.1, 0.2).finished()}, {1.0});
    const auto in = uq_first_order(g, ball, inside, NormSpec::euclidean(2), 0.1);
    CHECK(in.base == 0.0);
    CHECK(in.slope == 0.0);
    const DiscreteMeasure edge({(Vector(2) << 1.0, 0.0).finished()}, {1.0});
    CHECK_THROWS_AS(uq_first_order(g, ball, edge, NormSpec::euclidean(2), 0.1), ValidationError);
    const auto hs = ProjectionSet::half_space((Vector(2) << 0.0, 2.0).finished(), 2.0);
    CHECK(hs.distance((Vector(2) << 5.0, 3.0).finished()) == doctest::Approx(2.0));
  }

  TEST_CASE("out-of-sample study: small runs") {
    CltStudyConfig cfg;
    cfg.n = 100;
    cfg.replications = 60;
    cfg.reference_size = 20000;
    cfg.seed = 5;
    const auto r1 = clt_study(cfg, builtin_loss("quadratic-tracking"), NormSpec::euclidean(1));
    CHECK(r1.failures == 0);
    CHECK(std::abs(r1.empirical_mean[0]) <= 3.0 * r1.standard_error[0]);
    CHECK(std::abs(r1.predicted_mean[0]) <= 1e-12);
    CHECK(r1.predicted_covariance(0, 0) == doctest::Approx(1.0).epsilon(0.05));
    const auto r2 = clt_study(cfg, builtin_loss("quadratic-tracking"), NormSpec::euclidean(1));
    CHECK(clt_report_to_json(r1).dump() == clt_report_to_json(r2).dump());
    cfg.sampler = "nope";
    CHECK_THROWS_AS(clt_study(cfg, builtin_loss("quadratic-tracking"), NormSpec::euclidean(1)), ValidationError);
  }
}
