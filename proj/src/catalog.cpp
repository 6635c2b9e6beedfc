// Built-in loss catalog with analytic derivative stacks.

#include "wdro/error.hpp"
#include "wdro/problem.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace wdro {

namespace {

using json = nlohmann::json;

double get(const json& p, const char* key, double fallback) {
  if (!p.contains(key)) return fallback;
  if (!p.at(key).is_number()) throw ValidationError(std::string("parameter '") + key + "' must be a number");
  return p.at(key).get<double>();
}

int get_int(const json& p, const char* key, int fallback) {
  if (!p.contains(key)) return fallback;
  if (!p.at(key).is_number_integer()) {
    throw ValidationError(std::string("parameter '") + key + "' must be an integer");
  }
  return p.at(key).get<int>();
}

Vector get_vector(const json& p, const char* key) {
  if (!p.contains(key)) throw ValidationError(std::string("missing parameter '") + key + "'");
  const json& v = p.at(key);
  if (v.is_number()) return Vector::Constant(1, v.get<double>());
  if (!v.is_array() || v.empty()) throw ValidationError(std::string("parameter '") + key + "' must be a nonempty array");
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) throw ValidationError(std::string("parameter '") + key + "' has a non-numeric entry");
    out[static_cast<Eigen::Index>(i)] = v[i].get<double>();
  }
  return out;
}

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }
double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Scalar convex loss l with two derivatives.
struct ScalarLoss {
  std::string id;
  double alpha = 1.0;
  double growth = 1.0;
  double value(double y) const {
    if (id == "linear") return y;
    if (id == "quadratic") return y + 0.5 * y * y;
    if (id == "exp") return std::exp(y);
    return std::max(y, 0.0) / alpha;
  }
  double d1(double y) const {
    if (id == "linear") return 1.0;
    if (id == "quadratic") return 1.0 + y;
    if (id == "exp") return std::exp(y);
    return y >= 0.0 ? 1.0 / alpha : 0.0;
  }
  double d2(double y) const {
    if (id == "linear") return 0.0;
    if (id == "quadratic") return 1.0;
    if (id == "exp") return std::exp(y);
    return 0.0;
  }
};

ScalarLoss parse_scalar_loss(const json& p) {
  ScalarLoss l;
  const json spec = p.contains("l") ? p.at("l") : json("linear");
  json lp = json::object();
  if (spec.is_string()) {
    l.id = spec.get<std::string>();
  } else if (spec.is_object() && spec.contains("id")) {
    l.id = spec.at("id").get<std::string>();
    lp = spec;
  } else {
    throw ValidationError("parameter 'l' must be a string or {\"id\": ...}");
  }
  if (l.id == "linear") {
    l.growth = 0.0;
  } else if (l.id == "quadratic") {
    l.growth = 2.0;
  } else if (l.id == "exp") {
    l.growth = std::numeric_limits<double>::infinity();
  } else if (l.id == "avar") {
    l.alpha = get(lp, "alpha", get(p, "alpha", 0.05));
    if (!(l.alpha > 0.0 && l.alpha < 1.0)) throw ValidationError("avar level alpha must lie in (0,1)");
    l.growth = 1.0;
  } else {
    throw ValidationError("unknown scalar loss '" + l.id + "' (known: linear, quadratic, exp, avar)");
  }
  return l;
}

// Payoff g: R^d -> R with gradient.
struct Payoff {
  std::string id;
  int dim = 1;
  Vector c;
  double c0 = 0.0;
  double s0 = 1.0;
  double strike = 1.0;
  double beta = 50.0;
  double growth = 1.0;

  double value(const Vector& x) const {
    if (id == "identity") return x[0];
    if (id == "linear") return c.dot(x) + c0;
    const double z = s0 * x[0] - strike;
    if (id == "call") return std::max(z, 0.0);
    return softplus(beta * z) / beta;
  }
  Vector grad(const Vector& x) const {
    if (id == "identity") return Vector::Ones(1);
    if (id == "linear") return c;
    const double z = s0 * x[0] - strike;
    if (id == "call") return Vector::Constant(1, z >= 0.0 ? s0 : 0.0);
    return Vector::Constant(1, s0 * logistic(beta * z));
  }
};

Payoff parse_payoff(const json& p) {
  Payoff g;
  const json spec = p.contains("g") ? p.at("g") : json("identity");
  json gp = json::object();
  if (spec.is_string()) {
    g.id = spec.get<std::string>();
  } else if (spec.is_object() && spec.contains("id")) {
    g.id = spec.at("id").get<std::string>();
    gp = spec;
  } else {
    throw ValidationError("parameter 'g' must be a string or {\"id\": ...}");
  }
  if (g.id == "identity") {
    g.dim = 1;
  } else if (g.id == "linear") {
    g.c = get_vector(gp, "c");
    g.c0 = get(gp, "c0", 0.0);
    g.dim = static_cast<int>(g.c.size());
  } else if (g.id == "call" || g.id == "smooth-call") {
    g.s0 = get(gp, "S0", 1.0);
    g.strike = get(gp, "K", 1.0);
    g.beta = get(gp, "beta", 50.0);
    if (!(g.s0 > 0.0) || !(g.beta > 0.0)) throw ValidationError("payoff needs S0 > 0 and beta > 0");
  } else {
    throw ValidationError("unknown payoff '" + g.id + "' (known: identity, linear, call, smooth-call)");
  }
  return g;
}

Vector get_x0(const json& p, int d) {
  if (!p.contains("x0")) return Vector::Zero(d);
  Vector x0 = get_vector(p, "x0");
  if (x0.size() != d) throw ValidationError("x0 has the wrong dimension");
  return x0;
}

LossModel make_constant(const json& p) {
  const double c = get(p, "value", 0.0);
  const int d = get_int(p, "dim", 1);
  LossModel::Evaluators ev{
      [c](const Vector&, const Vector& a) { return c + 0.5 * a.squaredNorm(); },
      [d](const Vector&, const Vector&) { return Vector(Vector::Zero(d)); },
      [](const Vector&, const Vector& a) { return a; },
      [d](const Vector&, const Vector& a) { return Matrix(Matrix::Zero(a.size(), d)); },
      [](const Vector&, const Vector& a) { return Matrix(Matrix::Identity(a.size(), a.size())); }};
  return LossModel("constant", d, 1, 0.0, std::move(ev));
}

LossModel make_linear(const json& p) {
  const Vector c = get_vector(p, "c");
  const double b = get(p, "b", 0.0);
  const double kappa = get(p, "kappa", 1.0);
  const auto d = c.size();
  LossModel::Evaluators ev{
      [c, b, kappa](const Vector& x, const Vector& a) {
        return c.dot(x) + 0.5 * kappa * (a[0] - b) * (a[0] - b);
      },
      [c](const Vector&, const Vector&) { return c; },
      [b, kappa](const Vector&, const Vector& a) { return Vector(Vector::Constant(1, kappa * (a[0] - b))); },
      [d](const Vector&, const Vector&) { return Matrix(Matrix::Zero(1, d)); },
      [kappa](const Vector&, const Vector&) { return Matrix(Matrix::Constant(1, 1, kappa)); }};
  return LossModel("linear", static_cast<int>(d), 1, 1.0, std::move(ev));
}

LossModel make_power(const json& p) {
  const int d = get_int(p, "dim", 1);
  const double e = get(p, "exponent", 2.0);
  const double coef = get(p, "coef", 1.0);
  if (!(e >= 1.0)) throw ValidationError("power loss needs exponent >= 1");
  LossModel::Evaluators ev{
      [e, coef](const Vector& x, const Vector& a) {
        return coef * std::pow(x.norm(), e) + 0.5 * a.squaredNorm();
      },
      [e, coef](const Vector& x, const Vector&) {
        const double n = x.norm();
        if (n == 0.0) return Vector(Vector::Zero(x.size()));
        return Vector(coef * e * std::pow(n, e - 2.0) * x);
      },
      [](const Vector&, const Vector& a) { return a; },
      [d](const Vector&, const Vector& a) { return Matrix(Matrix::Zero(a.size(), d)); },
      [](const Vector&, const Vector& a) { return Matrix(Matrix::Identity(a.size(), a.size())); }};
  return LossModel("power", d, 1, e, std::move(ev));
}

LossModel make_quadratic_tracking(const json& p) {
  const int d = get_int(p, "dim", 1);
  LossModel::Evaluators ev{
      [](const Vector& x, const Vector& a) { return (a - x).squaredNorm(); },
      [](const Vector& x, const Vector& a) { return Vector(2.0 * (x - a)); },
      [](const Vector& x, const Vector& a) { return Vector(2.0 * (a - x)); },
      [d](const Vector&, const Vector&) { return Matrix(-2.0 * Matrix::Identity(d, d)); },
      [d](const Vector&, const Vector&) { return Matrix(2.0 * Matrix::Identity(d, d)); }};
  return LossModel("quadratic-tracking", d, d, 2.0, std::move(ev));
}

// State (x, y) with x in R^k, y scalar last.
LossModel make_sqrt_regression(const json& p) {
  const int k = get_int(p, "k", 1);
  if (k < 1) throw ValidationError("sqrt-regression needs k >= 1");
  LossModel::Evaluators ev{
      [k](const Vector& z, const Vector& a) {
        const double r = z[k] - z.head(k).dot(a);
        return r * r;
      },
      [k](const Vector& z, const Vector& a) {
        const double r = z[k] - z.head(k).dot(a);
        Vector g(k + 1);
        g.head(k) = -2.0 * r * a;
        g[k] = 2.0 * r;
        return g;
      },
      [k](const Vector& z, const Vector& a) {
        const double r = z[k] - z.head(k).dot(a);
        return Vector(-2.0 * r * z.head(k));
      },
      [k](const Vector& z, const Vector& a) {
        const Vector x = z.head(k);
        const double r = z[k] - x.dot(a);
        Matrix c(k, k + 1);
        c.leftCols(k) = 2.0 * x * a.transpose() - 2.0 * r * Matrix::Identity(k, k);
        c.col(k) = -2.0 * x;
        return c;
      },
      [k](const Vector& z, const Vector&) {
        const Vector x = z.head(k);
        return Matrix(2.0 * x * x.transpose());
      }};
  return LossModel("sqrt-regression", k + 1, k, 2.0, std::move(ev));
}

LossModel make_call(const json& p, bool smooth) {
  json gp = p;
  gp["id"] = smooth ? "smooth-call" : "call";
  const Payoff g = parse_payoff(json{{"g", gp}});
  LossModel::Evaluators ev{
      [g](const Vector& x, const Vector& a) { return g.value(x) + 0.5 * a.squaredNorm(); },
      [g](const Vector& x, const Vector&) { return g.grad(x); },
      [](const Vector&, const Vector& a) { return a; },
      [](const Vector&, const Vector& a) { return Matrix(Matrix::Zero(a.size(), 1)); },
      [](const Vector&, const Vector& a) { return Matrix(Matrix::Identity(a.size(), a.size())); }};
  return LossModel(smooth ? "smooth-call" : "call", 1, 1, 1.0, std::move(ev));
}

LossModel make_oce(const json& p) {
  const ScalarLoss l = parse_scalar_loss(p);
  const Payoff g = parse_payoff(p);
  LossModel::Evaluators ev{
      [l, g](const Vector& x, const Vector& a) { return l.value(g.value(x) - a[0]) + a[0]; },
      [l, g](const Vector& x, const Vector& a) {
        return Vector(l.d1(g.value(x) - a[0]) * g.grad(x));
      },
      [l, g](const Vector& x, const Vector& a) {
        return Vector(Vector::Constant(1, 1.0 - l.d1(g.value(x) - a[0])));
      },
      [l, g](const Vector& x, const Vector& a) {
        return Matrix(-l.d2(g.value(x) - a[0]) * g.grad(x).transpose());
      },
      [l, g](const Vector& x, const Vector& a) {
        return Matrix(Matrix::Constant(1, 1, l.d2(g.value(x) - a[0])));
      }};
  return LossModel("oce", g.dim, 1, l.growth, std::move(ev));
}

LossModel make_hedging(const json& p) {
  const ScalarLoss l = parse_scalar_loss(p);
  const Payoff g = parse_payoff(p);
  const Vector x0 = get_x0(p, g.dim);
  const int d = g.dim;
  auto u = [g, x0](const Vector& x, const Vector& a) { return g.value(x) + a.dot(x - x0); };
  LossModel::Evaluators ev{
      [l, u](const Vector& x, const Vector& a) { return l.value(u(x, a)); },
      [l, g, u](const Vector& x, const Vector& a) { return Vector(l.d1(u(x, a)) * (g.grad(x) + a)); },
      [l, u, x0](const Vector& x, const Vector& a) { return Vector(l.d1(u(x, a)) * (x - x0)); },
      [l, g, u, x0, d](const Vector& x, const Vector& a) {
        const double uu = u(x, a);
        return Matrix(l.d2(uu) * (x - x0) * (g.grad(x) + a).transpose() +
                      l.d1(uu) * Matrix::Identity(d, d));
      },
      [l, u, x0](const Vector& x, const Vector& a) {
        const Vector v = x - x0;
        return Matrix(l.d2(u(x, a)) * v * v.transpose());
      }};
  return LossModel("hedging", d, d, l.growth, std::move(ev));
}

// a = (H, m): H in R^d is the hedge, m the cash level.
LossModel make_oce_hedging(const json& p) {
  const ScalarLoss l = parse_scalar_loss(p);
  const Payoff g = parse_payoff(p);
  const Vector x0 = get_x0(p, g.dim);
  const int d = g.dim;
  auto u = [g, x0, d](const Vector& x, const Vector& a) {
    return g.value(x) + a.head(d).dot(x - x0) + a[d];
  };
  auto v = [x0, d](const Vector& x) {
    Vector out(d + 1);
    out.head(d) = x - x0;
    out[d] = 1.0;
    return out;
  };
  LossModel::Evaluators ev{
      [l, u, d](const Vector& x, const Vector& a) { return l.value(u(x, a)) - a[d]; },
      [l, g, u, d](const Vector& x, const Vector& a) {
        return Vector(l.d1(u(x, a)) * (g.grad(x) + a.head(d)));
      },
      [l, u, v, d](const Vector& x, const Vector& a) {
        Vector out = l.d1(u(x, a)) * v(x);
        out[d] -= 1.0;
        return out;
      },
      [l, g, u, v, d](const Vector& x, const Vector& a) {
        const double uu = u(x, a);
        Matrix c = l.d2(uu) * v(x) * (g.grad(x) + a.head(d)).transpose();
        c.topRows(d) += l.d1(uu) * Matrix::Identity(d, d);
        return c;
      },
      [l, u, v](const Vector& x, const Vector& a) {
        const Vector vv = v(x);
        return Matrix(l.d2(u(x, a)) * vv * vv.transpose());
      }};
  return LossModel("oce-hedging", d, d + 1, l.growth, std::move(ev));
}

LossModel make_quadratic_c2(const json& p) {
  const Payoff g = parse_payoff(p);
  LossModel::Evaluators ev{
      [g](const Vector& x, const Vector& a) { return 0.5 * a[0] * a[0] - g.value(x) * a[0]; },
      [g](const Vector& x, const Vector& a) { return Vector(-a[0] * g.grad(x)); },
      [g](const Vector& x, const Vector& a) { return Vector(Vector::Constant(1, a[0] - g.value(x))); },
      [g](const Vector& x, const Vector&) { return Matrix(-g.grad(x).transpose()); },
      [](const Vector&, const Vector&) { return Matrix(Matrix::Constant(1, 1, 1.0)); }};
  return LossModel("quadratic-c2", g.dim, 1, 1.0, std::move(ev));
}

// Derivatives hold almost everywhere (off the kink <z,x> = m).
LossModel make_avar(const json& p) {
  const Vector z = get_vector(p, "z");
  const double alpha = get(p, "alpha", 0.05);
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("avar level alpha must lie in (0,1)");
  const auto d = z.size();
  LossModel::Evaluators ev{
      [z, alpha](const Vector& x, const Vector& a) {
        return a[0] + std::max(z.dot(x) - a[0], 0.0) / alpha;
      },
      [z, alpha](const Vector& x, const Vector& a) {
        return Vector(z.dot(x) >= a[0] ? Vector(z / alpha) : Vector(Vector::Zero(z.size())));
      },
      [z, alpha](const Vector& x, const Vector& a) {
        return Vector(Vector::Constant(1, z.dot(x) >= a[0] ? 1.0 - 1.0 / alpha : 1.0));
      },
      [d](const Vector&, const Vector&) { return Matrix(Matrix::Zero(1, d)); },
      [](const Vector&, const Vector&) { return Matrix(Matrix::Zero(1, 1)); }};
  return LossModel("avar", static_cast<int>(d), 1, 1.0, std::move(ev));
}

// One-hidden-layer network (tanh or identity activation). a packs A1
// (row-major), b1, A2 (row-major), b2.
struct Network {
  int n_in = 1;
  int hidden = 8;
  int n_out = 1;
  double power = 2.0;
  bool linear = false;

  int params() const { return hidden * n_in + hidden + n_out * hidden + n_out; }

  struct Forward {
    Vector hdn;
    Vector err;  // y - out
    double norm = 0.0;
  };

  Forward forward(const Vector& state, const Vector& a) const {
    using RowMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
    RowMap a1(a.data(), hidden, n_in);
    const auto b1 = a.segment(hidden * n_in, hidden);
    RowMap a2(a.data() + hidden * n_in + hidden, n_out, hidden);
    const auto b2 = a.tail(n_out);
    Forward fw;
    const Vector pre = a1 * state.head(n_in) + b1;
    fw.hdn = linear ? pre : Vector(pre.array().tanh().matrix());
    fw.err = state.tail(n_out) - (a2 * fw.hdn + b2);
    fw.norm = fw.err.norm();
    return fw;
  }

  // activation derivative at the hidden layer
  Vector slope(const Forward& fw) const {
    return linear ? Vector(Vector::Ones(hidden)) : Vector((1.0 - fw.hdn.array().square()).matrix());
  }

  // d f / d err
  Vector outer_grad(const Forward& fw) const {
    if (fw.norm == 0.0) return Vector::Zero(n_out);
    return power * std::pow(fw.norm, power - 2.0) * fw.err;
  }
};

LossModel make_nn(const json& p) {
  Network net;
  net.n_in = get_int(p, "input_dim", 1);
  net.hidden = get_int(p, "hidden", 8);
  net.n_out = get_int(p, "output_dim", 1);
  net.power = get(p, "power", 2.0);
  const std::string act = p.contains("activation") ? p.at("activation").get<std::string>() : "tanh";
  if (act != "tanh" && act != "identity") {
    throw ValidationError("activation '" + act +
                          "' is not supported; use the smooth activation 'tanh' (or 'identity' for a linear network)");
  }
  net.linear = act == "identity";
  if (net.n_in < 1 || net.hidden < 1 || net.n_out < 1) throw ValidationError("nn widths must be positive");
  if (!(net.power >= 1.0)) throw ValidationError("nn loss power must be >= 1");
  LossModel::Evaluators ev;
  ev.value = [net](const Vector& s, const Vector& a) {
    return std::pow(net.forward(s, a).norm, net.power);
  };
  ev.grad_x = [net](const Vector& s, const Vector& a) {
    using RowMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
    const auto fw = net.forward(s, a);
    const Vector ge = net.outer_grad(fw);
    RowMap a1(a.data(), net.hidden, net.n_in);
    RowMap a2(a.data() + net.hidden * net.n_in + net.hidden, net.n_out, net.hidden);
    const Vector dz = (a2.transpose() * ge).cwiseProduct(net.slope(fw));
    Vector g(net.n_in + net.n_out);
    g.head(net.n_in) = -(a1.transpose() * dz);
    g.tail(net.n_out) = ge;
    return g;
  };
  ev.grad_a = [net](const Vector& s, const Vector& a) {
    using RowMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
    const auto fw = net.forward(s, a);
    const Vector ge = net.outer_grad(fw);
    RowMap a2(a.data() + net.hidden * net.n_in + net.hidden, net.n_out, net.hidden);
    const Vector x = s.head(net.n_in);
    const Vector dz = -(a2.transpose() * ge).cwiseProduct(net.slope(fw));
    Vector g(net.params());
    Eigen::Index o = 0;
    for (int i = 0; i < net.hidden; ++i) {
      for (int j = 0; j < net.n_in; ++j) g[o++] = dz[i] * x[j];
    }
    for (int i = 0; i < net.hidden; ++i) g[o++] = dz[i];
    for (int i = 0; i < net.n_out; ++i) {
      for (int j = 0; j < net.hidden; ++j) g[o++] = -ge[i] * fw.hdn[j];
    }
    for (int i = 0; i < net.n_out; ++i) g[o++] = -ge[i];
    return g;
  };
  return LossModel("nn", net.n_in + net.n_out, net.params(), net.power, std::move(ev));
}

}  // namespace

std::vector<std::string> loss_catalog() {
  return {"constant", "linear",  "power",       "quadratic-tracking", "sqrt-regression",
          "call",     "smooth-call", "oce",     "hedging",            "oce-hedging",
          "quadratic-c2", "avar", "nn"};
}

LossModel builtin_loss(const std::string& id, const nlohmann::json& params) {
  if (!params.is_object()) throw ValidationError("loss parameters must be a JSON object");
  if (id == "constant") return make_constant(params);
  if (id == "linear") return make_linear(params);
  if (id == "power") return make_power(params);
  if (id == "quadratic-tracking") return make_quadratic_tracking(params);
  if (id == "sqrt-regression") return make_sqrt_regression(params);
  if (id == "call") return make_call(params, false);
  if (id == "smooth-call") return make_call(params, true);
  if (id == "oce") return make_oce(params);
  if (id == "hedging") return make_hedging(params);
  if (id == "oce-hedging") return make_oce_hedging(params);
  if (id == "quadratic-c2") return make_quadratic_c2(params);
  if (id == "avar") return make_avar(params);
  if (id == "nn") return make_nn(params);
  std::string known;
  for (const auto& s : loss_catalog()) known += (known.empty() ? "" : ", ") + s;
  throw ValidationError("unknown loss '" + id + "'; catalog: " + known);
}

}  // namespace wdro
