#include "wdro/numerics.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace wdro {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kInvPhi = 0.6180339887498949;  // 1/golden ratio
}  // namespace

double lp_norm(const Vector& v, double s) {
  if (v.size() == 0) return 0.0;
  if (std::isinf(s)) return v.lpNorm<Eigen::Infinity>();
  if (s == 1.0) return v.lpNorm<1>();
  if (s == 2.0) return v.norm();
  // scale by the max-norm to avoid overflow in |v_i|^s
  const double m = v.lpNorm<Eigen::Infinity>();
  if (m == 0.0) return 0.0;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) acc += std::pow(std::abs(v[i]) / m, s);
  return m * std::pow(acc, 1.0 / s);
}

Vector lp_direction(const Vector& v, double s) {
  Vector u = Vector::Zero(v.size());
  if (v.size() == 0) return u;
  if (std::isinf(s)) {
    Eigen::Index arg = 0;
    const double m = v.cwiseAbs().maxCoeff(&arg);
    if (m > 0.0) u[arg] = v[arg] > 0 ? 1.0 : -1.0;
    return u;
  }
  if (s == 1.0) {
    for (Eigen::Index i = 0; i < v.size(); ++i) u[i] = v[i] > 0 ? 1.0 : (v[i] < 0 ? -1.0 : 0.0);
    return u;
  }
  const double n = lp_norm(v, s);
  if (n == 0.0) return u;
  if (s == 2.0) return v / n;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double a = std::abs(v[i]) / n;
    u[i] = (v[i] > 0 ? 1.0 : (v[i] < 0 ? -1.0 : 0.0)) * std::pow(a, s - 1.0);
  }
  return u;
}

double conjugate_exponent(double s) {
  if (s == 1.0) return kInf;
  if (std::isinf(s)) return 1.0;
  return s / (s - 1.0);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_pdf(double x) {
  static const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * M_PI);
  return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

double normal_quantile(double u) {
  static const boost::math::normal_distribution<double> std_normal(0.0, 1.0);
  return boost::math::quantile(std_normal, u);
}

ScalarMin golden_section(const std::function<double(double)>& f, double lo, double hi,
                         double x_tol, int max_iter) {
  ScalarMin out;
  double a = lo;
  double b = hi;
  double c = b - kInvPhi * (b - a);
  double d = a + kInvPhi * (b - a);
  double fc = f(c);
  double fd = f(d);
  out.evaluations = 2;
  for (int it = 0; it < max_iter && std::abs(b - a) > x_tol; ++it) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = f(d);
    }
    ++out.evaluations;
  }
  if (fc <= fd) {
    out.x = c;
    out.value = fc;
  } else {
    out.x = d;
    out.value = fd;
  }
  return out;
}

ScalarMin golden_section_unbounded(const std::function<double(double)>& f, double x0,
                                   double initial_step, double x_tol, int max_iter) {
  double step = initial_step > 0 ? initial_step : 1.0;
  double a = x0;
  double fa = f(a);
  double b = x0 + step;
  double fb = f(b);
  int evals = 2;
  if (fb > fa) {
    std::swap(a, b);
    std::swap(fa, fb);
  }
  // now f(b) <= f(a); walk from a through b until the function turns up
  double c = b + (b - a) / kInvPhi;
  double fc = f(c);
  ++evals;
  int guard = 0;
  while (fc < fb && guard++ < 200) {
    a = b;
    fa = fb;
    b = c;
    fb = fc;
    c = b + (b - a) / kInvPhi;
    fc = f(c);
    ++evals;
  }
  ScalarMin r = golden_section(f, std::min(a, c), std::max(a, c), x_tol, max_iter);
  r.evaluations += evals;
  if (fb < r.value) {
    r.x = b;
    r.value = fb;
  }
  return r;
}

QuasiNewtonResult minimize_bfgs(const ValueAndGradient& f, const Vector& x0,
                                const QuasiNewtonOptions& opt) {
  const Eigen::Index n = x0.size();
  QuasiNewtonResult res;
  Vector x = x0;
  if (opt.project) opt.project(x);
  Vector g(n);
  double fx = f(x, g);
  const bool projected = static_cast<bool>(opt.project);
  Matrix hinv = opt.initial_inverse_hessian.size() == n * n && !projected
                    ? opt.initial_inverse_hessian
                    : Matrix::Identity(n, n);
  bool scaled = opt.initial_inverse_hessian.size() == n * n;

  auto stationarity = [&](const Vector& xc, const Vector& gc) {
    if (!projected) return gc.lpNorm<Eigen::Infinity>();
    Vector t = xc - gc;
    opt.project(t);
    return (xc - t).lpNorm<Eigen::Infinity>();
  };

  int stall = 0;
  Vector xt(n), gt(n);
  for (int it = 0; it < opt.max_iter; ++it) {
    res.iterations = it;
    if (!std::isfinite(fx)) break;
    if (stationarity(x, g) <= opt.grad_tol) {
      res.converged = true;
      break;
    }
    Vector dir = projected ? Vector(-g) : Vector(-hinv * g);
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      hinv.setIdentity();
      scaled = false;
      dir = -g;
      slope = -g.squaredNorm();
    }
    // Armijo line search: expand while the full step keeps improving,
    // otherwise backtrack.
    auto trial = [&](double t, Vector& xo, Vector& go) {
      xo = x + t * dir;
      if (projected) opt.project(xo);
      return f(xo, go);
    };
    auto armijo_ok = [&](double t, double ft, const Vector& xo) {
      const double pred = projected ? g.dot(xo - x) : t * slope;
      return std::isfinite(ft) && ft <= fx + 1e-4 * pred;
    };
    double t = 1.0;
    double ft = trial(t, xt, gt);
    bool accepted = false;
    if (armijo_ok(t, ft, xt)) {
      accepted = true;
      Vector xe(n), ge(n);
      for (int k = 0; k < 60; ++k) {
        const double fe = trial(2.0 * t, xe, ge);
        if (!(fe < ft) || !armijo_ok(2.0 * t, fe, xe)) break;
        t *= 2.0;
        ft = fe;
        xt = xe;
        gt = ge;
        if (xt.norm() > opt.divergence_radius) break;
      }
    } else {
      Vector xb(n), gb(n);
      double best_t = 0.0, best_f = fx;
      for (int k = 0; k < 80; ++k) {
        t *= 0.5;
        ft = trial(t, xt, gt);
        if (armijo_ok(t, ft, xt)) {
          accepted = true;
          break;
        }
        if (std::isfinite(ft) && ft < best_f) {
          best_f = ft;
          best_t = t;
          xb = xt;
          gb = gt;
        }
      }
      if (!accepted && best_t > 0.0) {
        accepted = true;
        ft = best_f;
        xt = xb;
        gt = gb;
      }
    }
    if (!accepted) {
      // no descent possible at machine precision
      res.converged = stationarity(x, g) <= std::sqrt(opt.grad_tol);
      break;
    }
    if (xt.norm() > opt.divergence_radius || ft == -std::numeric_limits<double>::infinity()) {
      x = xt;
      fx = ft;
      g = gt;
      res.diverged = true;
      break;
    }
    const Vector s = xt - x;
    const Vector y = gt - g;
    const double improvement = fx - ft;
    x = xt;
    g = gt;
    fx = ft;
    if (!projected) {
      const double sy = s.dot(y);
      if (sy > 1e-14 * s.norm() * y.norm() && sy > 0.0) {
        if (!scaled) {
          hinv *= sy / y.squaredNorm();
          scaled = true;
        }
        const double rho = 1.0 / sy;
        const Vector hy = hinv * y;
        // rank-two BFGS update of the inverse Hessian
        hinv += rho * rho * (sy + y.dot(hy)) * (s * s.transpose()) -
                rho * (hy * s.transpose() + s * hy.transpose());
      }
    }
    if (improvement <= opt.value_tol * (1.0 + std::abs(fx))) {
      if (++stall >= opt.stall_iterations) {
        res.converged = true;
        break;
      }
    } else {
      stall = 0;
    }
    res.iterations = it + 1;
  }
  res.x = std::move(x);
  res.value = fx;
  res.gradient = std::move(g);
  return res;
}

std::vector<double> neville_to_zero(std::span<const double> h, std::span<const double> y) {
  const std::size_t n = h.size();
  std::vector<double> p(y.begin(), y.end());
  std::vector<double> diag;
  diag.reserve(n);
  if (n == 0) return diag;
  diag.push_back(p[0]);
  for (std::size_t m = 1; m < n; ++m) {
    for (std::size_t i = 0; i + m < n; ++i) {
      p[i] = (-h[i + m] * p[i] + h[i] * p[i + 1]) / (h[i] - h[i + m]);
    }
    diag.push_back(p[0]);
  }
  return diag;
}

Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& x) {
  Vector g(x.size());
  Vector xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = fd_step(x[i]);
    xp[i] = x[i] + h;
    const double fp = f(xp);
    xp[i] = x[i] - h;
    const double fm = f(xp);
    xp[i] = x[i];
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

Matrix fd_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& x) {
  Vector xp = x;
  Matrix jac;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = fd_step(x[i]);
    xp[i] = x[i] + h;
    const Vector fp = f(xp);
    xp[i] = x[i] - h;
    const Vector fm = f(xp);
    xp[i] = x[i];
    if (i == 0) jac.resize(fp.size(), x.size());
    jac.col(i) = (fp - fm) / (2.0 * h);
  }
  return jac;
}

}  // namespace wdro
