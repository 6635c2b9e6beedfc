#include "wdro/applications.hpp"
#include "wdro/error.hpp"

#include <cmath>
#include <sstream>

namespace wdro {

SmoothMap SmoothMap::affine(const Matrix& A, const Vector& b) {
  if (A.rows() != b.size()) throw ValidationError("affine map: A has " + std::to_string(A.rows()) +
                                                  " rows but b has " + std::to_string(b.size()) + " entries");
  SmoothMap g;
  g.in_dim = static_cast<int>(A.cols());
  g.out_dim = static_cast<int>(A.rows());
  g.value = [A, b](const Vector& x) -> Vector { return A * x + b; };
  g.jacobian = [A](const Vector&) -> Matrix { return A; };
  return g;
}

ProjectionSet ProjectionSet::ball(const Vector& center, double radius) {
  if (!(radius >= 0.0)) throw ValidationError("ball radius must be >= 0");
  ProjectionSet e;
  e.kind_ = Kind::Ball;
  e.a_ = center;
  e.r_ = radius;
  return e;
}

ProjectionSet ProjectionSet::box(const Vector& lower, const Vector& upper) {
  if (lower.size() != upper.size()) throw ValidationError("box bounds differ in dimension");
  if ((lower.array() > upper.array()).any()) throw ValidationError("box has lower > upper");
  ProjectionSet e;
  e.kind_ = Kind::Box;
  e.a_ = lower;
  e.b_ = upper;
  return e;
}

ProjectionSet ProjectionSet::half_space(const Vector& normal, double offset) {
  if (!(normal.norm() > 0.0)) throw ValidationError("half-space normal must be nonzero");
  ProjectionSet e;
  e.kind_ = Kind::HalfSpace;
  e.a_ = normal;
  e.r_ = offset;
  return e;
}

int ProjectionSet::dim() const { return static_cast<int>(a_.size()); }

Vector ProjectionSet::project(const Vector& y) const {
  if (y.size() != a_.size()) throw ValidationError("point and set differ in dimension");
  switch (kind_) {
    case Kind::Ball: {
      const Vector d = y - a_;
      const double n = d.norm();
      return n <= r_ ? y : Vector(a_ + (r_ / n) * d);
    }
    case Kind::Box:
      return y.cwiseMax(a_).cwiseMin(b_);
    case Kind::HalfSpace: {
      const double excess = a_.dot(y) - r_;
      return excess <= 0.0 ? y : Vector(y - (excess / a_.squaredNorm()) * a_);
    }
  }
  return y;
}

double ProjectionSet::distance(const Vector& y) const { return (y - project(y)).norm(); }

bool ProjectionSet::on_boundary(const Vector& y, double tol) const {
  if (distance(y) > 0.0) return false;
  switch (kind_) {
    case Kind::Ball:
      return r_ - (y - a_).norm() <= tol;
    case Kind::Box:
      return std::min((y - a_).minCoeff(), (b_ - y).minCoeff()) <= tol;
    case Kind::HalfSpace:
      return (r_ - a_.dot(y)) / a_.norm() <= tol;
  }
  return false;
}

LossModel distance_loss(const SmoothMap& G, const ProjectionSet& E) {
  if (G.out_dim != E.dim()) {
    throw ValidationError("map output dimension " + std::to_string(G.out_dim) + " differs from set dimension " +
                          std::to_string(E.dim()));
  }
  LossModel::Evaluators ev;
  ev.value = [G, E](const Vector& x, const Vector&) { return E.distance(G.value(x)); };
  // grad d(y, E) = (y - P y) / d outside E, 0 inside
  ev.grad_x = [G, E](const Vector& x, const Vector&) -> Vector {
    const Vector y = G.value(x);
    const Vector r = y - E.project(y);
    const double d = r.norm();
    if (d == 0.0) return Vector::Zero(G.in_dim);
    return G.jacobian(x).transpose() * (r / d);
  };
  ev.grad_a = [](const Vector&, const Vector&) -> Vector { return Vector::Zero(1); };
  ev.cross = [G](const Vector&, const Vector&) -> Matrix { return Matrix::Zero(1, G.in_dim); };
  ev.hess_a = [](const Vector&, const Vector&) -> Matrix { return Matrix::Zero(1, 1); };
  return LossModel("distance-to-set", G.in_dim, 1, 1.0, std::move(ev));
}

UqExpansion uq_first_order(const SmoothMap& G, const ProjectionSet& E, const DiscreteMeasure& mu,
                           const NormSpec& norm, double delta) {
  if (!(delta >= 0.0)) throw ValidationError("delta must be >= 0");
  if (mu.dim() != G.in_dim || norm.dim() != G.in_dim) throw ValidationError("measure, norm and map dimensions differ");
  if (!(norm.p() > 1.0)) throw ValidationError("Wasserstein order p must be > 1");
  double boundary_mass = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const Vector y = G.value(mu.atom(i));
    if (E.on_boundary(y, 1e-10 * (1.0 + y.norm()))) boundary_mass += mu.weight(i);
  }
  if (boundary_mass > 1e-9) {
    std::ostringstream os;
    os << "mass " << boundary_mass << " of the measure maps onto the boundary of E, where the distance "
       << "is not differentiable";
    throw ValidationError(os.str());
  }
  const LossModel loss = distance_loss(G, E);
  const Vector a = Vector::Zero(1);
  const double q = norm.q();
  UqExpansion out;
  double acc = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    out.base += mu.weight(i) * loss.value(mu.atom(i), a);
    acc += mu.weight(i) * std::pow(norm.norm(loss.grad_x(mu.atom(i), a)), q);
  }
  out.slope = std::pow(acc, 1.0 / q);
  out.first_order = out.base - out.slope * delta;
  return out;
}

}  // namespace wdro
