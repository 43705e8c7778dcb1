#pragma once

// Linear almost Poisson structure on the dual bundle D*. Points of D* are
// x = (q^1..q^m, p_1..p_n); functions on D* are ScalarFn over that layout.

#include "skewalg/algebroid.hpp"

namespace skewalg {

/// (m+n) x (m+n): (q^j, p_a) = rho^j_a, (p_a, p_b) = -C^g_ab p_g, (q, q) = 0.
Mat lambda_matrix(const SkewAlgebroid& a, const Vec& x);

/// {phi, psi}(x) = grad(phi) . Lambda . grad(psi).
double bracket(const SkewAlgebroid& a, const ScalarFn& phi, const ScalarFn& psi, const Vec& x,
               FdOptions fd = {});

BracketEvaluator bracket_evaluator(const SkewAlgebroid& a);

/// {phi,{psi,chi}} + {psi,{chi,phi}} + {chi,{phi,psi}}; the outer
/// derivatives use a 1e-4 step.
double jacobiator(const SkewAlgebroid& a, const ScalarFn& phi, const ScalarFn& psi, const ScalarFn& chi,
                  const Vec& x);

/// Hamilton equations term by term:
///   dq^i/dt = rho^i_a dh/dp_a,
///   dp_a/dt = -(rho^i_a dh/dq^i + C^g_ab p_g dh/dp_b).
Vec hamiltonian_vf(const SkewAlgebroid& a, const ScalarFn& h, const Vec& x);

/// The same field as Lambda . grad h, for cross-checking.
Vec hamiltonian_vf_from_lambda(const SkewAlgebroid& a, const ScalarFn& h, const Vec& x);

/// Columns span L = T_q alpha (rho(D_q)) inside T_{alpha(q)} D*.
Mat lagrangian_subspace(const SkewAlgebroid& a, const VectorFn& alpha, const Vec& q);

struct LagrangianReport {
  int dim_l = 0;
  bool holds = false;          // #Lambda(L^0) == L
  bool cocycle = false;        // d_oneform(alpha) vanishes at q
  double cocycle_residual = 0.0;
};

LagrangianReport lagrangian_subspace_check(const SkewAlgebroid& a, const VectorFn& alpha, const Vec& q);

/// Ker #Lambda(alpha(q)) inside L^0. Requires alpha to be a cocycle at q.
bool kernel_inclusion_check(const SkewAlgebroid& a, const VectorFn& alpha, const Vec& q);

/// Residual below which d_oneform counts as zero in the subspace checks.
inline constexpr double kCocycleTolerance = 1e-6;

}  // namespace skewalg
