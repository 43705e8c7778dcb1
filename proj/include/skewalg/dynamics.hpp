#pragma once

// Time integration of Hamilton, Euler-Lagrange and Lagrange-d'Alembert
// flows, Hamilton-Jacobi residuals, and the lift-equivalence harness.
//
// Frames are orthonormal, so the Legendre map is the identity on frame
// components and velocity states (q, v) use the same numbers as (q, p).

#include <array>
#include <iosfwd>
#include <vector>

#include "skewalg/algebroid.hpp"

namespace skewalg {

enum class StateLayout { Dual, Velocity };

struct Trajectory {
  StateLayout layout = StateLayout::Dual;
  int m = 0;  // base part width
  int n = 0;  // fiber part width
  std::vector<double> t;
  std::vector<Vec> x;

  /// Header t,q1..qm,p1..pn (or v1..vn); values with 17 significant digits.
  void write_csv(std::ostream& out) const;
};

using Rhs = std::function<Vec(double, const Vec&)>;

/// Classical fixed-step RK4; the last step is shortened to land on t1.
Trajectory rk4_integrate(const Rhs& rhs, const Vec& x0, double t0, double t1, double dt);

class MechanicalSystem {
 public:
  MechanicalSystem(SkewAlgebroid a, ScalarFn potential = {});

  const SkewAlgebroid& algebroid() const { return a_; }
  double potential(const Vec& q) const { return v_ ? v_(q) : 0.0; }
  Vec potential_gradient(const Vec& q) const;

  /// h(q, p) = 1/2 |p|^2 + V(q) on the dual bundle.
  ScalarFn hamiltonian() const;
  /// E(q, v) = 1/2 |v|^2 + V(q).
  double energy(const Vec& x) const;

  /// dq^i/dt = rho^i_B v^B, dv^E/dt = -C^C_EB v^B v^C - rho^j_E dV/dq^j.
  Vec rhs(const Vec& x) const;

 private:
  SkewAlgebroid a_;
  ScalarFn v_;
};

/// -C^C_EB v^B v^C, the quadratic term as printed.
Vec quadratic_term(const StructureTensor& c, const Vec& v);
/// -Gamma^E_BC v^B v^C with Gamma^E_BC = (C^C_EB + C^B_EC + C^E_BC) / 2.
Vec quadratic_term_christoffel(const StructureTensor& c, const Vec& v);

Trajectory hamilton_flow(const SkewAlgebroid& a, const ScalarFn& h, const Vec& x0, double t1, double dt);
Trajectory geodesic_el_flow(const MechanicalSystem& sys, const Vec& x0, double t1, double dt);
Trajectory nonholonomic_flow(const MechanicalSystem& sys, const Vec& x0, double t1, double dt);

/// Component g: rho^i_g (dh/dq^i + d alpha_v/dq^i dh/dp_v) at (q, alpha(q)).
Vec hj_residual(const SkewAlgebroid& a, const ScalarFn& h, const VectorFn& alpha, const Vec& q);

/// Base part of the Hamiltonian field at alpha(q): rho^i_g dh/dp_g.
Vec projected_vf(const SkewAlgebroid& a, const ScalarFn& h, const VectorFn& alpha, const Vec& q);

struct HarnessReport {
  double max_lift_defect = 0.0;
  double max_hj_residual = 0.0;
  double max_cocycle_residual = 0.0;
  bool cocycle_ok = true;
  Trajectory base;    // c(t)
  Trajectory lifted;  // Hamilton flow from alpha(c(0))
};

/// Integrates c' = projected_vf and the Hamilton flow from alpha(q0) on the
/// same grid, and compares (q, p)(t) with (c, alpha(c))(t) in sup norm.
HarnessReport lift_harness(const SkewAlgebroid& a, const ScalarFn& h, const VectorFn& alpha,
                                const Vec& q0, double t1, double dt);

/// Largest |f(x(t)) - f(x(0))| along a trajectory.
double max_drift(const Trajectory& tr, const ScalarFn& f);

struct SnakeboardParams {
  double m = 1.0, r = 1.0, j0 = 0.5, j1 = 0.1875;
};

struct SnakeboardState {
  double phi, psi;
  double v1, v2, v3;
};

/// Closed-form integral curves of the snakeboard HJ family with constants
/// C0..C4; the linear branch is used when |C0| <= 1e-12.
SnakeboardState closed_form_snakeboard(const SnakeboardParams& p, const std::array<double, 5>& c, double t);

}  // namespace skewalg
