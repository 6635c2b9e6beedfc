#include "wdro/io.hpp"
#include "wdro/error.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace wdro {

using nlohmann::json;

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace {

// JSON has no literal for non-finite numbers; they are emitted as strings.
void emit(std::ostream& out, const json& j, int depth) {
  const std::string pad(static_cast<std::size_t>(2 * (depth + 1)), ' ');
  const std::string close(static_cast<std::size_t>(2 * depth), ' ');
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        out << "{}";
        return;
      }
      out << "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out << ",\n";
        first = false;
        out << pad << json(it.key()).dump() << ": ";
        emit(out, it.value(), depth + 1);
      }
      out << "\n" << close << "}";
      return;
    }
    case json::value_t::array: {
      if (j.empty()) {
        out << "[]";
        return;
      }
      bool scalar = true;
      for (const auto& e : j) scalar = scalar && !e.is_structured();
      if (scalar) {
        out << "[";
        for (std::size_t i = 0; i < j.size(); ++i) {
          if (i) out << ", ";
          emit(out, j[i], depth + 1);
        }
        out << "]";
        return;
      }
      out << "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out << ",\n";
        out << pad;
        emit(out, j[i], depth + 1);
      }
      out << "\n" << close << "]";
      return;
    }
    case json::value_t::number_float: {
      const double x = j.get<double>();
      if (std::isfinite(x)) {
        out << format_double(x);
      } else {
        out << '"' << format_double(x) << '"';
      }
      return;
    }
    default:
      out << j.dump();
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void write_json(std::ostream& out, const json& j) {
  emit(out, j, 0);
  out << "\n";
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  write_json(out, j);
}

void write_csv_file(const std::string& path, const std::vector<std::string>& header,
                    const std::vector<std::vector<double>>& rows) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_double(row[i]);
    out << "\n";
  }
}

std::vector<double> parse_delta_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw ValidationError("delta list entry '" + item + "' is not a number");
    }
    if (item.find_first_not_of(" \t", used) != std::string::npos) {
      throw ValidationError("delta list entry '" + item + "' is not a number");
    }
    if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError("delta list entries must be finite and > 0");
    out.push_back(v);
  }
  if (out.empty()) throw ValidationError("delta list is empty");
  return out;
}

json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Vector vector_from_json(const json& j, const std::string& what) {
  if (j.is_number()) return Vector::Constant(1, j.get<double>());
  if (!j.is_array()) throw ValidationError(what + " must be a number or an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ValidationError(what + " must contain numbers only");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

namespace {

DiscreteMeasure parse_measure(const json& j, const std::string& base_dir) {
  if (j.is_string()) {
    std::filesystem::path p(j.get<std::string>());
    if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
    return load_measure(p.string());
  }
  return measure_from_json(j);
}

NormSpec parse_norm(const json& j, int dim, double p) {
  if (j.is_null()) return NormSpec(dim, 2.0, p);
  if (!j.is_object()) throw ValidationError("\"norm\" must be an object");
  const double s = j.value("s", 2.0);
  std::vector<int> active;
  if (j.contains("active")) {
    for (const auto& e : j.at("active")) {
      if (!e.is_number_integer()) throw ValidationError("norm \"active\" must list integer indices");
      active.push_back(e.get<int>());
    }
    if (active.empty()) throw ValidationError("norm \"active\" must not be empty");
  }
  return NormSpec(dim, s, p, active);
}

SupportSpec parse_support(const json& j, int dim) {
  if (j.is_null()) return SupportSpec::whole();
  if (j.contains("lower") || j.contains("upper")) {
    const double inf = std::numeric_limits<double>::infinity();
    const Vector lo = j.contains("lower") ? vector_from_json(j.at("lower"), "support lower") : Vector::Constant(dim, -inf);
    const Vector hi = j.contains("upper") ? vector_from_json(j.at("upper"), "support upper") : Vector::Constant(dim, inf);
    if (lo.size() != dim || hi.size() != dim) throw ValidationError("support box has the wrong dimension");
    return SupportSpec::box(lo, hi);
  }
  if (j.contains("A") && j.contains("b")) {
    const auto& ja = j.at("A");
    const Vector b = vector_from_json(j.at("b"), "support b");
    if (!ja.is_array() || ja.size() != static_cast<std::size_t>(b.size())) {
      throw ValidationError("support A must have one row per entry of b");
    }
    Matrix a(b.size(), dim);
    for (std::size_t i = 0; i < ja.size(); ++i) {
      const Vector row = vector_from_json(ja[i], "support A row");
      if (row.size() != dim) throw ValidationError("support A row has the wrong dimension");
      a.row(static_cast<Eigen::Index>(i)) = row.transpose();
    }
    return SupportSpec::half_spaces(a, b);
  }
  throw ValidationError("\"support\" needs {\"lower\", \"upper\"} or {\"A\", \"b\"}");
}

ConstraintSet parse_constraints(const json& j, const DiscreteMeasure& mu) {
  if (j.is_null()) return {};
  if (!j.is_array()) throw ValidationError("\"constraints\" must be an array");
  std::vector<ConstraintSet> parts;
  const int d = mu.dim();
  for (const auto& c : j) {
    const std::string type = c.value("type", "");
    if (type == "martingale") {
      const Vector x0 = c.contains("x0") ? vector_from_json(c.at("x0"), "martingale x0") : mu.mean();
      if (x0.size() != d) throw ValidationError("martingale x0 has the wrong dimension");
      parts.push_back(ConstraintSet::martingale(x0));
    } else if (type == "covariance") {
      const int i = c.at("i").get<int>();
      const int k = c.at("j").get<int>();
      if (i < 0 || i >= d || k < 0 || k >= d) throw ValidationError("covariance indices out of range");
      const double b = c.contains("b") ? c.at("b").get<double>()
                                       : mu.integrate([&](const Vector& x) { return x[i] * x[k]; });
      parts.push_back(ConstraintSet::covariance(d, i, k, b));
    } else if (type == "linear") {
      const Vector cv = vector_from_json(c.at("c"), "linear constraint c");
      if (cv.size() != d) throw ValidationError("linear constraint c has the wrong dimension");
      const double b = c.contains("b") ? c.at("b").get<double>()
                                       : mu.integrate([&](const Vector& x) { return cv.dot(x); });
      parts.push_back(ConstraintSet::linear(cv, b));
    } else {
      throw ValidationError("unknown constraint type '" + type + "' (known: martingale, covariance, linear)");
    }
  }
  return ConstraintSet::combine(parts);
}

}  // namespace

ProblemSpec parse_problem_spec(const json& j, const std::string& base_dir, std::optional<double> p_override) {
  if (!j.is_object()) throw ValidationError("problem spec must be a JSON object");
  if (!j.contains("loss")) throw ValidationError("problem spec needs \"loss\"");
  if (!j.contains("measure")) throw ValidationError("problem spec needs \"measure\"");
  const json& jl = j.at("loss");
  std::string id;
  json params = json::object();
  if (jl.is_string()) {
    id = jl.get<std::string>();
  } else if (jl.is_object() && jl.contains("id")) {
    id = jl.at("id").get<std::string>();
    if (jl.contains("params")) params = jl.at("params");
  } else {
    throw ValidationError("\"loss\" must be a catalog id or {\"id\", \"params\"}");
  }
  LossModel loss = builtin_loss(id, params);
  DiscreteMeasure mu = parse_measure(j.at("measure"), base_dir);
  if (mu.dim() != loss.state_dim()) {
    throw ValidationError("measure dimension " + std::to_string(mu.dim()) + " differs from the state dimension " +
                          std::to_string(loss.state_dim()) + " of loss '" + id + "'");
  }
  const double p = p_override ? *p_override : j.value("p", 2.0);
  NormSpec norm = parse_norm(j.contains("norm") ? j.at("norm") : json(), mu.dim(), p);
  SupportSpec support = parse_support(j.contains("support") ? j.at("support") : json(), mu.dim());
  ConstraintSet constraints = parse_constraints(j.contains("constraints") ? j.at("constraints") : json(), mu);
  std::optional<Vector> action;
  if (j.contains("action")) {
    action = vector_from_json(j.at("action"), "action");
    if (action->size() != loss.action_dim()) throw ValidationError("\"action\" has the wrong dimension");
  }
  Vector a0 = Vector::Zero(loss.action_dim());
  if (j.contains("a0")) {
    a0 = vector_from_json(j.at("a0"), "a0");
    if (a0.size() != loss.action_dim()) throw ValidationError("\"a0\" has the wrong dimension");
  }
  return ProblemSpec{id, params, std::move(loss), std::move(mu), std::move(norm), std::move(support),
                     std::move(constraints), std::move(action), std::move(a0)};
}

ProblemSpec load_problem_spec(const std::string& path, std::optional<double> p_override) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ValidationError("spec '" + path + "' is not valid JSON: " + e.what());
  }
  const std::string dir = std::filesystem::path(path).parent_path().string();
  return parse_problem_spec(j, dir.empty() ? "." : dir, p_override);
}

}  // namespace wdro
