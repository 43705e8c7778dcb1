#pragma once

// Orbit machinery: iterated Lie brackets of the anchor image, rank growth,
// complete-nonholonomy verdicts and sampled orbits.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "skewalg/algebroid.hpp"

namespace skewalg {

/// [V, W]^i = V^j dW^i/dq^j - W^j dV^i/dq^j with central-difference Jacobians.
Vec lie_bracket(const VectorFn& v, const VectorFn& w, const Vec& q);

/// A base vector field in expression form, with its bracket word.
struct SymbolicField {
  std::vector<Expression> components;
  std::string word;  // "X1", "[X1,X2]", ...
  int depth = 0;
};

/// Exact bracket of two expression fields over the given coordinates.
SymbolicField symbolic_bracket(const SymbolicField& v, const SymbolicField& w,
                               const std::vector<std::string>& coords);

struct RankRow {
  Vec q;
  std::vector<int> ranks;  // cumulative rank after depth 0, 1, 2, ...
  int stabilized = 0;
  bool complete = false;   // stabilized == m
  std::vector<std::string> witnesses;  // bracket words that raised the rank
  std::vector<int> witness_depths;
};

inline constexpr double kBracketRankCutoff = 1e-8;

/// Rank of the span of anchor fields and their iterated brackets at q.
/// Brackets are formed as [X_i, F] for generators X_i and every field F of
/// the previous depth; the sweep stops once a full depth adds no rank, the
/// rank reaches m, or max_depth is hit (0 selects 2m).
RankRow bracket_closure_rank(const SkewAlgebroid& a, const Vec& q, int max_depth = 0);

enum class Verdict { CompletelyNonholonomic, RankDeficient };
std::string to_string(Verdict v);

struct NonholonomyReport {
  std::vector<RankRow> rows;
  Verdict verdict = Verdict::RankDeficient;
  int min_rank = 0;
  int max_rank = 0;

  void write_table(std::ostream& out, const std::vector<std::string>& coords) const;
  void write_csv(std::ostream& out, const std::vector<std::string>& coords) const;
};

NonholonomyReport verdict(const SkewAlgebroid& a, const std::vector<Vec>& points, int max_depth = 0);

struct OrbitParams {
  int n_steps = 200;
  double step_time = 0.1;
  std::uint64_t seed = 1;
  int substeps = 10;
};

/// Composition of short flows of randomly chosen anchor fields, each leg of
/// random duration in [-step_time, step_time]. Returns q0 and every leg end.
std::vector<Vec> sample_orbit(const SkewAlgebroid& a, const Vec& q0, const OrbitParams& p);

/// max |f(q) - f(q0)| over a sampled orbit. Requires d^D f to vanish at
/// every sampled point.
double constancy_on_orbit(const SkewAlgebroid& a, const ScalarFn& f, const Vec& q0, const OrbitParams& p);

}  // namespace skewalg
