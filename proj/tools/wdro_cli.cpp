#include "wdro/applications.hpp"
#include "wdro/error.hpp"
#include "wdro/io.hpp"
#include "wdro/oracle.hpp"
#include "wdro/sensitivity.hpp"
#include "wdro/suite.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

using namespace wdro;
using nlohmann::json;

namespace {

struct RunConfig {
  std::string spec;
  std::string out = ".";
  std::uint64_t seed = 1;
  std::string deltas;
  std::optional<double> tol;
  std::optional<double> p;
  std::string problem;
};

std::string out_path(const RunConfig& c, const std::string& name) {
  std::filesystem::create_directories(c.out);
  return (std::filesystem::path(c.out) / name).string();
}

OracleOptions oracle_options(const RunConfig& c) {
  OracleOptions o;
  o.seed = c.seed;
  if (c.tol) {
    if (!(*c.tol > 0.0)) throw ValidationError("--tol must be > 0");
    o.tolerance = *c.tol;
  }
  return o;
}

ProblemSpec require_spec(const RunConfig& c) {
  if (c.spec.empty()) throw ValidationError("--spec is required");
  return load_problem_spec(c.spec, c.p);
}

OptimizerCertificate base_optimizer(const ProblemSpec& s) {
  if (s.action) {
    OptimizerCertificate cert;
    cert.action = *s.action;
    cert.value = base_value(s.loss, s.mu, cert.action);
    cert.residual = base_gradient(s.loss, s.mu, cert.action).norm();
    return cert;
  }
  return solve_base_problem(s.loss, s.mu, s.a0);
}

json header(const std::string& command, const RunConfig& c, const ProblemSpec* s) {
  json j;
  j["command"] = command;
  j["seed"] = c.seed;
  if (s) {
    j["loss"] = {{"id", s->loss_id}, {"params", s->loss_params}};
    j["p"] = s->norm.p();
    j["s"] = s->norm.s();
    j["atoms"] = s->mu.size();
  }
  return j;
}

int cmd_upsilon(const RunConfig& c) {
  const ProblemSpec s = require_spec(c);
  const OptimizerCertificate a = base_optimizer(s);
  const OptimizerCertificate certs[] = {a};
  SensitivityReport rep = s.constraints.empty() ? upsilon(s.loss, s.mu, s.norm, certs)
                                                : upsilon_constrained(s.loss, s.mu, s.norm, s.constraints, a);
  json j = header("upsilon", c, &s);
  j["base_value"] = a.value;
  j["constrained"] = !s.constraints.empty();
  j["report"] = report_to_json(rep);
  write_json_file(out_path(c, "upsilon.json"), j);
  std::cout << "upsilon = " << format_double(rep.upsilon) << " (loss " << s.loss_id << ", p = "
            << format_double(s.norm.p()) << (s.constraints.empty() ? "" : ", constrained") << ")\n"
            << "first order: V(delta) ~ " << format_double(a.value) << " + " << format_double(rep.upsilon)
            << " delta\n";
  return 0;
}

int cmd_beth(const RunConfig& c) {
  const ProblemSpec s = require_spec(c);
  if (!s.constraints.empty()) throw ValidationError("beth does not support constraints");
  const OptimizerCertificate a = base_optimizer(s);
  const SensitivityReport rep = beth(s.loss, s.mu, s.norm, a);
  json j = header("beth", c, &s);
  j["report"] = report_to_json(rep);
  write_json_file(out_path(c, "beth.json"), j);
  std::cout << "beth =";
  for (Eigen::Index i = 0; i < rep.beth->size(); ++i) std::cout << " " << format_double((*rep.beth)[i]);
  std::cout << " (loss " << s.loss_id << ", p = " << format_double(s.norm.p()) << ")\n";
  return 0;
}

int cmd_oracle(const RunConfig& c) {
  const ProblemSpec s = require_spec(c);
  std::vector<double> deltas = parse_delta_list(c.deltas.empty() ? "0.1,0.05,0.02,0.01" : c.deltas);
  std::sort(deltas.begin(), deltas.end());
  const OracleOptions oo = oracle_options(c);
  RobustOptions ro;
  ro.oracle = oo;
  const OptimizerCertificate a = base_optimizer(s);
  json results = json::array();
  std::vector<std::vector<double>> rows;
  rows.push_back({0.0, a.value});
  for (Eigen::Index i = 0; i < a.action.size(); ++i) rows.back().push_back(a.action[i]);
  for (double d : deltas) {
    DualEvalResult r;
    Vector act = a.action;
    if (s.constraints.empty()) {
      act = robust_optimize(s.loss, s.mu, s.norm, d, a.action, s.support, ro).action;
      r = eval_dual(s.loss, s.mu, s.norm, d, act, s.support, oo);
    } else {
      r = eval_dual_constrained(s.loss, s.mu, s.norm, d, act, s.constraints, s.support, oo);
    }
    json jr = dual_result_to_json(r);
    jr["delta"] = d;
    jr["action"] = vector_to_json(act);
    results.push_back(jr);
    rows.push_back({d, r.value});
    for (Eigen::Index i = 0; i < act.size(); ++i) rows.back().push_back(act[i]);
    std::cout << "delta = " << format_double(d) << "  V = " << format_double(r.value) << "  gap = "
              << format_double(r.gap) << "\n";
  }
  json j = header("oracle", c, &s);
  j["tolerance"] = oo.tolerance;
  j["constrained"] = !s.constraints.empty();
  j["base_value"] = a.value;
  j["base_action"] = vector_to_json(a.action);
  j["results"] = results;
  write_json_file(out_path(c, "oracle.json"), j);
  std::vector<std::string> cols = {"delta", "value"};
  for (Eigen::Index i = 0; i < a.action.size(); ++i) cols.push_back("a" + std::to_string(i));
  write_csv_file(out_path(c, "oracle_trace.csv"), cols, rows);
  return 0;
}

int cmd_validate(const RunConfig& c) {
  std::vector<double> deltas = parse_delta_list(c.deltas.empty() ? "0.04,0.02,0.01,0.005" : c.deltas);
  SlopeOptions so;
  so.robust.oracle = oracle_options(c);
  std::vector<ValidationRow> rows;
  json j;
  if (!c.problem.empty()) {
    if (!c.spec.empty()) throw ValidationError("give either --problem or --spec, not both");
    const SuiteProblem pr = suite_problem(c.problem, c.seed, c.p.value_or(2.0));
    rows = run_validation(pr.loss, pr.mu, pr.norm, pr.support, pr.a0, deltas, so);
    j = header("validate", c, nullptr);
    j["problem"] = c.problem;
    j["p"] = pr.norm.p();
  } else {
    const ProblemSpec s = require_spec(c);
    if (!s.constraints.empty()) throw ValidationError("validate does not support constraints");
    rows = run_validation(s.loss, s.mu, s.norm, s.support, s.a0, deltas, so);
    j = header("validate", c, &s);
  }
  j["deltas"] = deltas;
  json jrows = json::array();
  std::vector<std::vector<double>> csv;
  bool ok = true;
  std::printf("%-16s %-24s %-24s %-12s %s\n", "quantity", "formula", "oracle", "gap", "result");
  for (const auto& r : rows) {
    ok = ok && r.pass;
    std::printf("%-16s %-24s %-24s %-12.3g %s\n", r.quantity.c_str(), format_double(r.formula).c_str(),
                format_double(r.oracle).c_str(), r.gap, r.pass ? "pass" : "FAIL");
    jrows.push_back({{"quantity", r.quantity},
                     {"formula", r.formula},
                     {"oracle", r.oracle},
                     {"gap", r.gap},
                     {"threshold", r.threshold},
                     {"pass", r.pass}});
  }
  j["rows"] = jrows;
  j["pass"] = ok;
  write_json_file(out_path(c, "validate.json"), j);
  return ok ? 0 : 3;
}

int exit_code(const std::exception& e) {
  if (dynamic_cast<const ValidationError*>(&e)) return 2;
  if (dynamic_cast<const NumericalError*>(&e)) return 3;
  return 1;
}

int cmd_figures(const RunConfig& c) {
  int status = 0;
  json summary = header("figures", c, nullptr);
  auto attempt = [&](const std::string& name, const std::function<void()>& fn) {
    try {
      fn();
      summary["figures"][name] = "ok";
      std::cout << name << ": ok\n";
    } catch (const std::exception& e) {
      summary["figures"][name] = std::string("failed: ") + e.what();
      std::cerr << name << ": " << e.what() << "\n";
      status = std::max(status, exit_code(e));
    }
  };

  attempt("fig1_bs.csv", [&] {
    BlackScholesSpec bs;
    const DiscreteMeasure mu = lognormal_returns(bs, 200);
    const double k = bs.K;
    const double base = robust_call_price(mu, bs.S0, k, 0.0, oracle_options(c));
    const double ups = call_upsilon_empirical(mu, bs.S0, k);
    const double bs_price = bs_call_price(bs);
    const double bs_ups = bs_call_upsilon(bs);
    std::vector<double> deltas = c.deltas.empty() ? std::vector<double>{0.01, 0.02, 0.03, 0.04, 0.05,
                                                                         0.06, 0.07, 0.08, 0.09, 0.1}
                                                  : parse_delta_list(c.deltas);
    std::sort(deltas.begin(), deltas.end());
    std::vector<std::vector<double>> rows = {{0.0, base, base, bs_price}};
    for (double d : deltas) {
      rows.push_back({d, robust_call_price(mu, bs.S0, k, d, oracle_options(c)), base + ups * d, bs_price + bs_ups * d});
    }
    write_csv_file(out_path(c, "fig1_bs.csv"), {"delta", "robust_price", "first_order", "bs_first_order"}, rows);
  });

  attempt("fig2_upsilon_vega.csv", [&] {
    std::vector<std::vector<double>> rows;
    for (int i = 0; i <= 100; ++i) {
      BlackScholesSpec bs;
      bs.K = 0.5 + 0.01 * i;
      rows.push_back({bs.K, bs_call_upsilon(bs), bs_vega(bs)});
    }
    write_csv_file(out_path(c, "fig2_upsilon_vega.csv"), {"strike", "upsilon", "vega"}, rows);
  });

  attempt("fig3_lasso.csv", [&] {
    const Vector beta = figure3_coefficients();
    const DiscreteMeasure data = linear_model_sample(beta, 2000, c.seed);
    std::vector<std::vector<double>> rows;
    for (double d : {0.02, 0.04, 0.06, 0.08, 0.1}) {
      const ShrinkageResult fo = sqrt_regression_shrinkage(data, 1.0, d);
      const Vector exact = exact_sqrt_regression(data, 1.0, d);
      for (Eigen::Index i = 0; i < beta.size(); ++i) {
        rows.push_back({d, static_cast<double>(i + 1), beta[i], fo.a_star[i], exact[i] - fo.a_star[i],
                        fo.first_order[i] - fo.a_star[i]});
      }
    }
    write_csv_file(out_path(c, "fig3_lasso.csv"),
                   {"delta", "coordinate", "beta", "ols", "exact_shift", "first_order_shift"}, rows);
  });

  write_json_file(out_path(c, "figures.json"), summary);
  return status;
}

int cmd_clt(const RunConfig& c) {
  if (c.spec.empty()) throw ValidationError("--spec is required");
  std::ifstream in(c.spec);
  if (!in) throw ValidationError("cannot open '" + c.spec + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ValidationError("spec '" + c.spec + "' is not valid JSON: " + e.what());
  }
  CltStudyConfig cfg;
  cfg.sampler = j.value("sampler", cfg.sampler);
  cfg.mean = j.value("mean", cfg.mean);
  cfg.sd = j.value("sd", cfg.sd);
  if (j.contains("beta")) cfg.beta = vector_from_json(j.at("beta"), "beta");
  cfg.n = j.value("n", cfg.n);
  cfg.replications = j.value("replications", cfg.replications);
  cfg.reference_size = j.value("reference_size", cfg.reference_size);
  cfg.seed = c.seed;
  const json jl = j.value("loss", json("quadratic-tracking"));
  const std::string id = jl.is_string() ? jl.get<std::string>() : jl.at("id").get<std::string>();
  const json params = jl.is_object() && jl.contains("params") ? jl.at("params") : json::object();
  const LossModel loss = builtin_loss(id, params);
  const double p = c.p.value_or(j.value("p", 2.0));
  NormSpec norm(loss.state_dim(), 2.0, p);
  if (j.contains("norm")) {
    const json& jn = j.at("norm");
    std::vector<int> active = jn.value("active", std::vector<int>{});
    norm = NormSpec(loss.state_dim(), jn.value("s", 2.0), p, active);
  }
  const CltReport rep = clt_study(cfg, loss, norm);
  json out = header("clt", c, nullptr);
  out["loss"] = {{"id", id}, {"params", params}};
  out["sampler"] = cfg.sampler;
  out["report"] = clt_report_to_json(rep);
  write_json_file(out_path(c, "clt.json"), out);
  std::vector<std::vector<double>> rows;
  std::vector<std::string> cols;
  for (Eigen::Index i = 0; i < rep.a_true.size(); ++i) cols.push_back("scaled_error" + std::to_string(i));
  for (const auto& e : rep.scaled_errors) rows.emplace_back(e.data(), e.data() + e.size());
  write_csv_file(out_path(c, "clt_errors.csv"), cols, rows);
  for (Eigen::Index i = 0; i < rep.a_true.size(); ++i) {
    std::cout << "coordinate " << i << ": empirical mean " << format_double(rep.empirical_mean[i]) << " +- "
              << format_double(rep.standard_error[i]) << ", predicted " << format_double(rep.predicted_mean[i])
              << "\n";
  }
  std::cout << "out-of-sample: empirical " << format_double(rep.oos_empirical) << ", predicted "
            << format_double(rep.oos_predicted) << ", failures " << rep.failures << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Wasserstein DRO sensitivities: first-order formulas and brute-force dual oracle"};
  app.require_subcommand(1);
  RunConfig cfg;

  auto common = [&](CLI::App* sub, bool spec_required) {
    auto* o = sub->add_option("--spec", cfg.spec, "problem spec (JSON)");
    if (spec_required) o->check(CLI::ExistingFile);
    sub->add_option("--out", cfg.out, "output directory")->capture_default_str();
    sub->add_option("--seed", cfg.seed, "seed (u64), recorded in every output")->capture_default_str();
    sub->add_option("--deltas", cfg.deltas, "comma-separated radii");
    sub->add_option("--tol", cfg.tol, "oracle tolerance");
    sub->add_option("--p", cfg.p, "Wasserstein order (overrides the spec)");
  };
  auto* up = app.add_subcommand("upsilon", "value sensitivity");
  common(up, true);
  auto* be = app.add_subcommand("beth", "optimizer sensitivity");
  common(be, true);
  auto* orc = app.add_subcommand("oracle", "robust values and optimizers on a delta grid");
  common(orc, true);
  auto* va = app.add_subcommand("validate", "oracle-vs-formula comparison table");
  common(va, false);
  va->add_option("--problem", cfg.problem, "built-in problem id");
  auto* fi = app.add_subcommand("figures", "fig1_bs.csv, fig2_upsilon_vega.csv, fig3_lasso.csv");
  common(fi, false);
  auto* cl = app.add_subcommand("clt", "out-of-sample study");
  common(cl, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*up) return cmd_upsilon(cfg);
    if (*be) return cmd_beth(cfg);
    if (*orc) return cmd_oracle(cfg);
    if (*va) return cmd_validate(cfg);
    if (*fi) return cmd_figures(cfg);
    if (*cl) return cmd_clt(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e);
  }
  return 0;
}
