#include "skewalg/morphism.hpp"

#include <cmath>
#include <limits>

#include "skewalg/dynamics.hpp"

namespace skewalg {

BundleMorphism::BundleMorphism(SkewAlgebroid source, SkewAlgebroid target, std::vector<Expression> base_map,
                               std::vector<std::vector<Expression>> fiber_map)
    : source_(std::move(source)),
      target_(std::move(target)),
      base_exprs_(std::move(base_map)),
      fiber_exprs_(std::move(fiber_map)) {
  if (static_cast<int>(base_exprs_.size()) != target_.base_dim())
    throw ModelError("base map needs " + std::to_string(target_.base_dim()) + " components");
  if (static_cast<int>(fiber_exprs_.size()) != target_.rank())
    throw ModelError("fiber map needs " + std::to_string(target_.rank()) + " rows");
  for (const auto& row : fiber_exprs_)
    if (static_cast<int>(row.size()) != source_.rank())
      throw ModelError("fiber map rows need " + std::to_string(source_.rank()) + " entries");
  for (const auto& e : base_exprs_) base_.push_back(source_.compile_base(e));
  for (const auto& row : fiber_exprs_) {
    std::vector<ScalarFn> r;
    for (const auto& e : row) r.push_back(source_.compile_base(e));
    fiber_.push_back(std::move(r));
  }
}

BundleMorphism BundleMorphism::identity(const SkewAlgebroid& a) {
  std::vector<Expression> base;
  for (const auto& c : a.coords()) base.push_back(Expression::variable(c));
  std::vector<std::vector<Expression>> fiber(a.rank(), std::vector<Expression>(a.rank()));
  for (int i = 0; i < a.rank(); ++i) fiber[i][i] = Expression::number(1.0);
  return BundleMorphism(a, a, std::move(base), std::move(fiber));
}

Vec BundleMorphism::base(const Vec& q) const {
  Vec out(static_cast<Eigen::Index>(base_.size()));
  for (std::size_t i = 0; i < base_.size(); ++i) out(static_cast<Eigen::Index>(i)) = base_[i](q);
  return out;
}

Mat BundleMorphism::fiber(const Vec& q) const {
  Mat out(target_.rank(), source_.rank());
  for (int r = 0; r < target_.rank(); ++r)
    for (int c = 0; c < source_.rank(); ++c) out(r, c) = fiber_[r][c](q);
  return out;
}

BundleMorphism BundleMorphism::with_scaled_row(int row, double factor) const {
  if (row < 0 || row >= target_.rank()) throw PreconditionError("fiber row out of range");
  auto fiber = fiber_exprs_;
  for (auto& e : fiber[row]) e = Expression::number(factor) * e;
  return BundleMorphism(source_, target_, base_exprs_, std::move(fiber));
}

Vec pullback_section(const BundleMorphism& m, const VectorFn& xbar, const Vec& q) {
  return m.fiber(q).transpose() * xbar(m.base(q));
}

LapReport check_lap_morphism(const BundleMorphism& m, const std::vector<Vec>& grid) {
  if (grid.empty()) throw PreconditionError("morphism check needs a nonempty grid");
  const auto& src = m.source();
  const auto& tgt = m.target();
  const int nbar = tgt.rank();
  LapReport r;
  for (const auto& q : grid) {
    const Mat ft = m.fiber(q);
    const Vec qbar = m.base(q);
    const Mat rho = src.anchor(q);
    const Mat rho_bar = tgt.anchor(qbar);
    const StructureTensor c = src.structure(q);
    const StructureTensor cbar = tgt.structure(qbar);
    const Mat tf = fd_jacobian([&](const Vec& y) { return m.base(y); }, q);

    // Pulled-back frame sections s_a = row a of Ftilde, and rho(s_a)(s_b).
    std::vector<VectorFn> rows;
    for (int b = 0; b < nbar; ++b)
      rows.push_back([&m, b](const Vec& y) { return Vec(m.fiber(y).row(b).transpose()); });
    std::vector<std::vector<Vec>> drv(nbar, std::vector<Vec>(nbar));
    for (int a = 0; a < nbar; ++a) {
      const Vec dir = rho * ft.row(a).transpose();
      for (int b = 0; b < nbar; ++b) drv[a][b] = fd_directional(rows[b], q, dir);
    }

    for (int a = 0; a < nbar; ++a) {
      const Vec sa = ft.row(a).transpose();
      const Vec anchor_gap = tf * (rho * sa) - rho_bar.col(a);
      r.max_anchor_defect = std::max(r.max_anchor_defect, anchor_gap.lpNorm<Eigen::Infinity>());
      for (int b = a + 1; b < nbar; ++b) {
        const Vec sb = ft.row(b).transpose();
        Vec lhs = c.bracket(sa, sb) + drv[a][b] - drv[b][a];
        Vec rhs = Vec::Zero(src.rank());
        for (int g = 0; g < nbar; ++g) rhs += cbar(a, b, g) * ft.row(g).transpose();
        r.max_bracket_defect = std::max(r.max_bracket_defect, (lhs - rhs).lpNorm<Eigen::Infinity>());
      }
    }
  }
  return r;
}

double check_hamiltonian_morphism(const BundleMorphism& m, const ScalarFn& h, const ScalarFn& hbar,
                                  const std::vector<Vec>& dual_grid, double lap_tol) {
  if (dual_grid.empty()) throw PreconditionError("hamiltonian check needs a nonempty grid");
  const int ms = m.source().base_dim();
  const int mt = m.target().base_dim();
  std::vector<Vec> base_grid;
  for (const auto& x : dual_grid) base_grid.push_back(x.head(ms));
  const LapReport lap = check_lap_morphism(m, base_grid);
  if (lap.max_bracket_defect > lap_tol || lap.max_anchor_defect > lap_tol)
    throw PreconditionError("not a linear almost Poisson morphism (bracket defect " +
                            std::to_string(lap.max_bracket_defect) + ", anchor defect " +
                            std::to_string(lap.max_anchor_defect) + ")");
  double worst = 0.0;
  for (const auto& x : dual_grid) {
    const Vec q = x.head(ms);
    const Vec p = x.tail(m.source().rank());
    Vec xbar(mt + m.target().rank());
    xbar << m.base(q), m.fiber(q) * p;
    worst = std::max(worst, std::abs(h(x) - hbar(xbar)));
  }
  return worst;
}

namespace {

Vec lift(const Vec& q, const Vec& p) {
  Vec x(q.size() + p.size());
  x << q, p;
  return x;
}

}  // namespace

TransferResult transfer_hj(const BundleMorphism& m, const VectorFn& alpha_bar, const ScalarFn& h,
                           const ScalarFn& hbar, const std::vector<Vec>& grid) {
  if (grid.empty()) throw PreconditionError("transfer needs a nonempty grid");
  const int n = m.source().rank();
  const VectorFn solve = [m, alpha_bar](const Vec& q) {
    return Vec(m.fiber(q).colPivHouseholderQr().solve(alpha_bar(m.base(q))));
  };
  TransferResult out{Section1Form(solve), {}};
  auto& r = out.report;
  double hmin = std::numeric_limits<double>::infinity();
  double hmax = -hmin;
  for (const auto& q : grid) {
    const Mat ft = m.fiber(q);
    if (numeric_rank(ft, 1e-9) != n) throw PreconditionError("fiber map is not injective at a grid point");
    const Vec qbar = m.base(q);
    const Vec target = alpha_bar(qbar);
    const Vec a = solve(q);
    const double residual = (ft * a - target).lpNorm<Eigen::Infinity>();
    if (residual > 1e-8)
      throw PreconditionError("target section leaves the image of the fiber map (residual " + std::to_string(residual) + ")");
    r.max_containment_residual = std::max(r.max_containment_residual, residual);
    r.max_round_trip = std::max(r.max_round_trip, (ft * out.alpha(q) - target).lpNorm<Eigen::Infinity>());

    const Mat d_src = d_oneform(m.source(), solve, q);
    const Mat d_tgt = d_oneform(m.target(), alpha_bar, qbar);
    r.max_source_cocycle = std::max(r.max_source_cocycle, max_abs(d_src));
    r.max_target_cocycle = std::max(r.max_target_cocycle, max_abs(d_tgt));
    r.max_relatedness_defect = std::max(r.max_relatedness_defect, max_abs(ft * d_src * ft.transpose() - d_tgt));
    r.max_source_hj = std::max(r.max_source_hj, hj_residual(m.source(), h, solve, q).lpNorm<Eigen::Infinity>());
    r.max_target_hj = std::max(r.max_target_hj, hj_residual(m.target(), hbar, alpha_bar, qbar).lpNorm<Eigen::Infinity>());
    const double hv = h(lift(q, a));
    hmin = std::min(hmin, hv);
    hmax = std::max(hmax, hv);
  }
  r.hamiltonian_spread = hmax - hmin;
  return out;
}

}  // namespace skewalg
