#pragma once

#include "wdro/measures.hpp"
#include "wdro/problem.hpp"

#include <json.hpp>

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace wdro {

/// %.17g; non-finite values print as inf, -inf, nan.
std::string format_double(double x);

/// Pretty JSON with every number printed through format_double. Object keys
/// come out sorted, so equal documents serialize to identical bytes.
void write_json(std::ostream& out, const nlohmann::json& j);
void write_json_file(const std::string& path, const nlohmann::json& j);

/// Header line plus one line per row, numbers through format_double.
void write_csv_file(const std::string& path, const std::vector<std::string>& header,
                    const std::vector<std::vector<double>>& rows);

/// "0.04,0.02,0.01" -> {0.04, 0.02, 0.01}. Every entry must be a finite
/// number > 0.
std::vector<double> parse_delta_list(const std::string& text);

nlohmann::json vector_to_json(const Vector& v);
Vector vector_from_json(const nlohmann::json& j, const std::string& what);

/// A problem read from a JSON spec:
///   loss         {"id": <catalog id>, "params": {...}}
///   measure      path (CSV or JSON, relative to the spec) or inline {"atoms", "weights"}
///   p            Wasserstein order (default 2)
///   norm         {"s": 2, "active": [0-based indices]} (default: Euclidean, all active)
///   support      {"lower", "upper"} box or {"A", "b"} half-spaces (default: whole space)
///   constraints  [{"type": "martingale", "x0"?}, {"type": "covariance", "i", "j", "b"?},
///                 {"type": "linear", "c", "b"}]; omitted x0 and b are calibrated to mu
///   action       supplied optimizer (skips the base solve)
///   a0           start of the base solve (default 0)
struct ProblemSpec {
  std::string loss_id;
  nlohmann::json loss_params;
  LossModel loss;
  DiscreteMeasure mu;
  NormSpec norm;
  SupportSpec support;
  ConstraintSet constraints;
  std::optional<Vector> action;
  Vector a0;
};

ProblemSpec parse_problem_spec(const nlohmann::json& j, const std::string& base_dir,
                               std::optional<double> p_override = std::nullopt);
ProblemSpec load_problem_spec(const std::string& path, std::optional<double> p_override = std::nullopt);

}  // namespace wdro
