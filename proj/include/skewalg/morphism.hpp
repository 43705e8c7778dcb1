#pragma once

// Vector bundle morphisms between dual bundles D* -> Dbar*: a base map F
// and a fiber matrix Ftilde(q) acting on momenta, p_bar = Ftilde(q) p.

#include <vector>

#include "skewalg/algebroid.hpp"

namespace skewalg {

class BundleMorphism {
 public:
  /// base_map: mbar expressions in source coordinates. fiber_map: nbar rows
  /// of n expressions in source coordinates.
  BundleMorphism(SkewAlgebroid source, SkewAlgebroid target, std::vector<Expression> base_map,
                 std::vector<std::vector<Expression>> fiber_map);

  static BundleMorphism identity(const SkewAlgebroid& a);

  const SkewAlgebroid& source() const { return source_; }
  const SkewAlgebroid& target() const { return target_; }
  const std::vector<Expression>& base_map() const { return base_exprs_; }
  const std::vector<std::vector<Expression>>& fiber_map() const { return fiber_exprs_; }

  Vec base(const Vec& q) const;
  Mat fiber(const Vec& q) const;  // nbar x n

  /// Same morphism with one fiber row multiplied by factor.
  BundleMorphism with_scaled_row(int row, double factor) const;

 private:
  SkewAlgebroid source_, target_;
  std::vector<Expression> base_exprs_;
  std::vector<std::vector<Expression>> fiber_exprs_;
  std::vector<ScalarFn> base_;
  std::vector<std::vector<ScalarFn>> fiber_;
};

/// Components of (Ftilde, F)^* Xbar at q: Ftilde(q)^T Xbar(F(q)).
Vec pullback_section(const BundleMorphism& m, const VectorFn& xbar, const Vec& q);

struct LapReport {
  double max_bracket_defect = 0.0;
  double max_anchor_defect = 0.0;
};

/// Both morphism conditions over all target frame pairs at every grid point.
LapReport check_lap_morphism(const BundleMorphism& m, const std::vector<Vec>& grid);

/// sup |h(q, p) - hbar(F(q), Ftilde(q) p)| over dual points; first requires
/// check_lap_morphism to pass at lap_tol on their base points.
double check_hamiltonian_morphism(const BundleMorphism& m, const ScalarFn& h, const ScalarFn& hbar,
                                  const std::vector<Vec>& dual_grid, double lap_tol = 1e-6);

struct TransferReport {
  double max_containment_residual = 0.0;
  double max_round_trip = 0.0;
  double max_source_cocycle = 0.0;
  double max_target_cocycle = 0.0;
  double max_source_hj = 0.0;
  double max_target_hj = 0.0;
  double hamiltonian_spread = 0.0;  // max - min of h(alpha(q)) over the grid
  double max_relatedness_defect = 0.0;
};

struct TransferResult {
  Section1Form alpha;
  TransferReport report;
};

/// Source section alpha with Ftilde(q) alpha(q) = alpha_bar(F(q)), plus the
/// residuals on both sides at every grid point.
TransferResult transfer_hj(const BundleMorphism& m, const VectorFn& alpha_bar, const ScalarFn& h,
                           const ScalarFn& hbar, const std::vector<Vec>& grid);

}  // namespace skewalg
