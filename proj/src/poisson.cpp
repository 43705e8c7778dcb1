#include "skewalg/poisson.hpp"

namespace skewalg {

namespace {

constexpr double kRankCutoff = 1e-9;

Vec lift(const Vec& q, const Vec& p) {
  Vec x(q.size() + p.size());
  x << q, p;
  return x;
}

}  // namespace

Mat lambda_matrix(const SkewAlgebroid& a, const Vec& x) {
  const int m = a.base_dim(), n = a.rank();
  const Vec q = x.head(m);
  const Vec p = x.tail(n);
  const Mat rho = a.anchor(q);
  const StructureTensor c = a.structure(q);
  Mat l = Mat::Zero(m + n, m + n);
  l.topRightCorner(m, n) = rho;
  l.bottomLeftCorner(n, m) = -rho.transpose();
  for (int al = 0; al < n; ++al)
    for (int be = al + 1; be < n; ++be) {
      double s = 0.0;
      for (int g = 0; g < n; ++g) s += c(al, be, g) * p(g);
      l(m + al, m + be) = -s;
      l(m + be, m + al) = s;
    }
  return l;
}

double bracket(const SkewAlgebroid& a, const ScalarFn& phi, const ScalarFn& psi, const Vec& x, FdOptions fd) {
  return fd_gradient(phi, x, fd).dot(lambda_matrix(a, x) * fd_gradient(psi, x, fd));
}

BracketEvaluator bracket_evaluator(const SkewAlgebroid& a) {
  return [a](const ScalarFn& phi, const ScalarFn& psi, const Vec& x) { return bracket(a, phi, psi, x); };
}

double jacobiator(const SkewAlgebroid& a, const ScalarFn& phi, const ScalarFn& psi, const ScalarFn& chi,
                  const Vec& x) {
  const FdOptions outer{1e-4, Stencil::Central2};
  auto nested = [&](const ScalarFn& f, const ScalarFn& g, const ScalarFn& h) {
    const ScalarFn inner = [&](const Vec& y) { return bracket(a, g, h, y); };
    return bracket(a, f, inner, x, outer);
  };
  return nested(phi, psi, chi) + nested(psi, chi, phi) + nested(chi, phi, psi);
}

Vec hamiltonian_vf(const SkewAlgebroid& a, const ScalarFn& h, const Vec& x) {
  const int m = a.base_dim(), n = a.rank();
  const Vec q = x.head(m);
  const Vec p = x.tail(n);
  const Vec grad = fd_gradient(h, x);
  const Vec dhdq = grad.head(m);
  const Vec dhdp = grad.tail(n);
  const Mat rho = a.anchor(q);
  const StructureTensor c = a.structure(q);
  Vec out(m + n);
  out.head(m) = rho * dhdp;
  for (int al = 0; al < n; ++al) {
    double s = rho.col(al).dot(dhdq);
    for (int be = 0; be < n; ++be)
      for (int g = 0; g < n; ++g) s += c(al, be, g) * p(g) * dhdp(be);
    out(m + al) = -s;
  }
  return out;
}

Vec hamiltonian_vf_from_lambda(const SkewAlgebroid& a, const ScalarFn& h, const Vec& x) {
  return lambda_matrix(a, x) * fd_gradient(h, x);
}

Mat lagrangian_subspace(const SkewAlgebroid& a, const VectorFn& alpha, const Vec& q) {
  const int m = a.base_dim(), n = a.rank();
  // Fourth-order stencil: the rank tests below resolve 1e-9 relative gaps.
  const Mat jac = fd_jacobian(alpha, q, {1e-3, Stencil::Central4});
  const Mat rho = a.anchor(q);
  Mat l(m + n, n);
  l.topRows(m) = rho;
  l.bottomRows(n) = jac * rho;
  return l;
}

LagrangianReport lagrangian_subspace_check(const SkewAlgebroid& a, const VectorFn& alpha, const Vec& q) {
  LagrangianReport r;
  const Mat l = lagrangian_subspace(a, alpha, q);
  const Mat lambda = lambda_matrix(a, lift(q, alpha(q)));
  const Mat annihilator = nullspace(l.transpose(), kRankCutoff);
  const Mat image = lambda.transpose() * annihilator;
  r.dim_l = numeric_rank(l, kRankCutoff);
  r.holds = same_span(l, image, kRankCutoff);
  r.cocycle_residual = max_abs(d_oneform(a, alpha, q));
  r.cocycle = r.cocycle_residual <= kCocycleTolerance;
  return r;
}

bool kernel_inclusion_check(const SkewAlgebroid& a, const VectorFn& alpha, const Vec& q) {
  const double residual = max_abs(d_oneform(a, alpha, q));
  if (residual > kCocycleTolerance)
    throw PreconditionError("section is not a 1-cocycle at this point (residual " + std::to_string(residual) + ")");
  const Mat l = lagrangian_subspace(a, alpha, q);
  const Mat kernel = nullspace(lambda_matrix(a, lift(q, alpha(q))), kRankCutoff);
  if (kernel.cols() == 0) return true;
  return max_abs(l.transpose() * kernel) <= 1e-8 * std::max(1.0, max_abs(l));
}

}  // namespace skewalg
