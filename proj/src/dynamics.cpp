#include "skewalg/dynamics.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include "skewalg/poisson.hpp"

namespace skewalg {

void Trajectory::write_csv(std::ostream& out) const {
  out << 't';
  for (int i = 1; i <= m; ++i) out << ",q" << i;
  const char s = layout == StateLayout::Dual ? 'p' : 'v';
  for (int i = 1; i <= n; ++i) out << ',' << s << i;
  out << '\n';
  char buf[32];
  for (std::size_t k = 0; k < t.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.17g", t[k]);
    out << buf;
    for (Eigen::Index i = 0; i < x[k].size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", x[k](i));
      out << ',' << buf;
    }
    out << '\n';
  }
}

Trajectory rk4_integrate(const Rhs& rhs, const Vec& x0, double t0, double t1, double dt) {
  if (!(dt > 0.0)) throw PreconditionError("time step must be positive");
  if (!std::isfinite(t0) || !std::isfinite(t1) || t1 < t0) throw PreconditionError("time span must be finite and ordered");
  Trajectory tr;
  tr.m = static_cast<int>(x0.size());
  tr.t.push_back(t0);
  tr.x.push_back(x0);
  Vec x = x0;
  double t = t0;
  auto eval = [&](double at, const Vec& y) {
    try {
      Vec k = rhs(at, y);
      if (!k.allFinite()) throw IntegrationError("non-finite derivative", at);
      return k;
    } catch (const EvalError& e) {
      throw IntegrationError(e.what(), at);
    }
  };
  for (long step = 1; t < t1; ++step) {
    double next = t0 + static_cast<double>(step) * dt;
    if (next > t1 || t1 - next < 1e-9 * dt) next = t1;
    const double h = next - t;
    const Vec k1 = eval(t, x);
    const Vec k2 = eval(t + h / 2, x + (h / 2) * k1);
    const Vec k3 = eval(t + h / 2, x + (h / 2) * k2);
    const Vec k4 = eval(next, x + h * k3);
    x += (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
    if (!x.allFinite()) throw IntegrationError("non-finite state", next);
    t = next;
    tr.t.push_back(t);
    tr.x.push_back(x);
  }
  return tr;
}

// ---------------------------------------------------------------------------

MechanicalSystem::MechanicalSystem(SkewAlgebroid a, ScalarFn potential)
    : a_(std::move(a)), v_(std::move(potential)) {}

Vec MechanicalSystem::potential_gradient(const Vec& q) const {
  if (!v_) return Vec::Zero(q.size());
  return fd_gradient(v_, q);
}

ScalarFn MechanicalSystem::hamiltonian() const {
  const int m = a_.base_dim();
  return [m, v = v_](const Vec& x) {
    const double kinetic = 0.5 * x.tail(x.size() - m).squaredNorm();
    return v ? kinetic + v(x.head(m)) : kinetic;
  };
}

double MechanicalSystem::energy(const Vec& x) const { return hamiltonian()(x); }

Vec quadratic_term(const StructureTensor& c, const Vec& v) {
  const int n = c.rank();
  Vec out = Vec::Zero(n);
  for (int e = 0; e < n; ++e)
    for (int b = 0; b < n; ++b)
      for (int cc = 0; cc < n; ++cc) out(e) -= c(e, b, cc) * v(b) * v(cc);
  return out;
}

Vec quadratic_term_christoffel(const StructureTensor& c, const Vec& v) {
  const int n = c.rank();
  Vec out = Vec::Zero(n);
  for (int e = 0; e < n; ++e)
    for (int b = 0; b < n; ++b)
      for (int cc = 0; cc < n; ++cc) {
        const double gamma = 0.5 * (c(e, b, cc) + c(e, cc, b) + c(b, cc, e));
        out(e) -= gamma * v(b) * v(cc);
      }
  return out;
}

Vec MechanicalSystem::rhs(const Vec& x) const {
  const int m = a_.base_dim(), n = a_.rank();
  const Vec q = x.head(m);
  const Vec v = x.tail(n);
  const Mat rho = a_.anchor(q);
  Vec out(m + n);
  out.head(m) = rho * v;
  out.tail(n) = quadratic_term(a_.structure(q), v) - rho.transpose() * potential_gradient(q);
  return out;
}

Trajectory hamilton_flow(const SkewAlgebroid& a, const ScalarFn& h, const Vec& x0, double t1, double dt) {
  Trajectory tr = rk4_integrate([&](double, const Vec& x) { return hamiltonian_vf(a, h, x); }, x0, 0.0, t1, dt);
  tr.m = a.base_dim();
  tr.n = a.rank();
  tr.layout = StateLayout::Dual;
  return tr;
}

namespace {

Trajectory velocity_flow(const MechanicalSystem& sys, const Vec& x0, double t1, double dt) {
  Trajectory tr = rk4_integrate([&](double, const Vec& x) { return sys.rhs(x); }, x0, 0.0, t1, dt);
  tr.m = sys.algebroid().base_dim();
  tr.n = sys.algebroid().rank();
  tr.layout = StateLayout::Velocity;
  return tr;
}

Vec lift(const Vec& q, const Vec& p) {
  Vec x(q.size() + p.size());
  x << q, p;
  return x;
}

}  // namespace

Trajectory geodesic_el_flow(const MechanicalSystem& sys, const Vec& x0, double t1, double dt) {
  return velocity_flow(sys, x0, t1, dt);
}

Trajectory nonholonomic_flow(const MechanicalSystem& sys, const Vec& x0, double t1, double dt) {
  return velocity_flow(sys, x0, t1, dt);
}

Vec hj_residual(const SkewAlgebroid& a, const ScalarFn& h, const VectorFn& alpha, const Vec& q) {
  const int m = a.base_dim(), n = a.rank();
  const Vec grad = fd_gradient(h, lift(q, alpha(q)));
  const Mat jac = fd_jacobian(alpha, q);  // (v, i) = d alpha_v / dq^i
  const Vec inner = grad.head(m) + jac.transpose() * grad.tail(n);
  return a.anchor(q).transpose() * inner;
}

Vec projected_vf(const SkewAlgebroid& a, const ScalarFn& h, const VectorFn& alpha, const Vec& q) {
  const Vec grad = fd_gradient(h, lift(q, alpha(q)));
  return a.anchor(q) * grad.tail(a.rank());
}

HarnessReport lift_harness(const SkewAlgebroid& a, const ScalarFn& h, const VectorFn& alpha,
                                const Vec& q0, double t1, double dt) {
  HarnessReport r;
  r.base = rk4_integrate([&](double, const Vec& q) { return projected_vf(a, h, alpha, q); }, q0, 0.0, t1, dt);
  r.base.m = a.base_dim();
  r.lifted = hamilton_flow(a, h, lift(q0, alpha(q0)), t1, dt);
  for (std::size_t k = 0; k < r.base.t.size(); ++k) {
    const Vec& c = r.base.x[k];
    const Vec expected = lift(c, alpha(c));
    r.max_lift_defect = std::max(r.max_lift_defect, (r.lifted.x[k] - expected).lpNorm<Eigen::Infinity>());
    r.max_hj_residual = std::max(r.max_hj_residual, hj_residual(a, h, alpha, c).lpNorm<Eigen::Infinity>());
    r.max_cocycle_residual = std::max(r.max_cocycle_residual, max_abs(d_oneform(a, alpha, c)));
  }
  r.cocycle_ok = r.max_cocycle_residual <= kCocycleTolerance;
  return r;
}

double max_drift(const Trajectory& tr, const ScalarFn& f) {
  if (tr.x.empty()) return 0.0;
  const double f0 = f(tr.x.front());
  double d = 0.0;
  for (const auto& x : tr.x) d = std::max(d, std::abs(f(x) - f0));
  return d;
}

SnakeboardState closed_form_snakeboard(const SnakeboardParams& p, const std::array<double, 5>& c, double t) {
  if (!(p.m > 0 && p.r > 0 && p.j0 > 0 && p.j1 > 0)) throw PreconditionError("snakeboard parameters must be positive");
  const auto [c0, c1, c2, c3, c4] = c;
  const double mr2 = p.m * p.r * p.r;
  const double phi = c0 * t + c3;
  const double s = std::sin(phi);
  const double radicand = mr2 - p.j0 * s * s;
  if (radicand < 0.0) throw EvalError("m r^2 - J0 sin^2(phi) is negative");
  SnakeboardState out{};
  out.phi = phi;
  if (std::abs(c0) > 1e-12) {
    const double arg = std::sqrt(2.0) * (std::sqrt(p.j0) * std::cos(phi) + std::sqrt(radicand));
    if (!(arg > 0.0)) throw EvalError("logarithm argument is not positive");
    out.psi = c1 * t - (c2 / c0) * std::log(arg) + c4;
  } else {
    const double s3 = std::sin(c3);
    out.psi = c1 * t + std::sqrt(p.j0) * c2 * t * s3 / std::sqrt(mr2 - p.j0 * s3 * s3) + c4;
  }
  const double f = p.j0 - p.j0 * p.j0 * s * s / mr2;
  const double k = p.j0 / (p.r * std::sqrt(p.m));
  out.v1 = std::sqrt(2 * p.j1) * c0;
  out.v2 = c1 * std::sqrt(f) + k * c2 * s;
  out.v3 = k * c1 * s - c2 * std::sqrt(f);
  return out;
}

}  // namespace skewalg
