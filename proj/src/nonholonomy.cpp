#include "skewalg/nonholonomy.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

namespace skewalg {

Vec lie_bracket(const VectorFn& v, const VectorFn& w, const Vec& q) {
  return fd_jacobian(w, q) * v(q) - fd_jacobian(v, q) * w(q);
}

SymbolicField symbolic_bracket(const SymbolicField& v, const SymbolicField& w,
                               const std::vector<std::string>& coords) {
  SymbolicField out;
  out.word = "[" + v.word + "," + w.word + "]";
  out.depth = std::max(v.depth, w.depth) + 1;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    Expression sum = Expression::number(0.0);
    for (std::size_t j = 0; j < coords.size(); ++j) {
      if (!v.components[j].is_constant(0.0)) sum = sum + v.components[j] * derivative(w.components[i], coords[j]);
      if (!w.components[j].is_constant(0.0)) sum = sum - w.components[j] * derivative(v.components[i], coords[j]);
    }
    out.components.push_back(sum);
  }
  return out;
}

namespace {

bool is_zero_field(const SymbolicField& f) {
  for (const auto& c : f.components)
    if (!c.is_constant(0.0)) return false;
  return true;
}

// Bracket words by depth, built lazily and shared across sample points.
class Tower {
 public:
  explicit Tower(const SkewAlgebroid& a) : a_(a) {
    std::vector<Entry> gens;
    for (int k = 0; k < a.rank(); ++k) {
      SymbolicField f;
      f.components = a.spec().anchor[k];
      f.word = a.labels()[k];
      gens.push_back(make(std::move(f)));
    }
    levels_.push_back(std::move(gens));
  }

  struct Entry {
    SymbolicField field;
    std::vector<ScalarFn> eval;
    bool zero;
  };

  const std::vector<Entry>& level(int d) {
    while (static_cast<int>(levels_.size()) <= d) {
      const int next = static_cast<int>(levels_.size());
      const auto& gens = levels_[0];
      const auto& prev = levels_[next - 1];
      std::vector<Entry> out;
      for (std::size_t i = 0; i < gens.size(); ++i) {
        if (gens[i].zero) continue;
        for (std::size_t k = 0; k < prev.size(); ++k) {
          if (next == 1 && k <= i) continue;
          if (prev[k].zero) continue;
          SymbolicField b = symbolic_bracket(gens[i].field, prev[k].field, a_.coords());
          if (is_zero_field(b)) continue;
          out.push_back(make(std::move(b)));
        }
      }
      levels_.push_back(std::move(out));
    }
    return levels_[d];
  }

  Vec value(const Entry& e, const Vec& q) const {
    Vec v(static_cast<Eigen::Index>(e.eval.size()));
    for (std::size_t i = 0; i < e.eval.size(); ++i) v(static_cast<Eigen::Index>(i)) = e.eval[i](q);
    return v;
  }

 private:
  Entry make(SymbolicField f) {
    Entry e{std::move(f), {}, false};
    e.zero = is_zero_field(e.field);
    for (const auto& c : e.field.components) e.eval.push_back(a_.compile_base(c));
    return e;
  }

  SkewAlgebroid a_;
  std::vector<std::vector<Entry>> levels_;
};

RankRow rank_row(Tower& tower, int m, const Vec& q, int max_depth) {
  RankRow row;
  row.q = q;
  Mat span(m, 0);
  int rank = 0;
  auto try_add = [&](const Tower::Entry& e, int depth) {
    const Vec v = tower.value(e, q);
    Mat grown(m, span.cols() + 1);
    grown << span, v;
    const int r = numeric_rank(grown, kBracketRankCutoff);
    if (r > rank) {
      span = std::move(grown);
      rank = r;
      if (depth > 0) {
        row.witnesses.push_back(e.field.word);
        row.witness_depths.push_back(depth);
      }
    }
  };
  for (const auto& e : tower.level(0)) try_add(e, 0);
  row.ranks.push_back(rank);
  for (int d = 1; d <= max_depth && rank < m; ++d) {
    const int before = rank;
    for (const auto& e : tower.level(d)) try_add(e, d);
    row.ranks.push_back(rank);
    if (rank == before) break;
  }
  row.stabilized = rank;
  row.complete = rank == m;
  return row;
}

std::string join_ints(const std::vector<int>& v, char sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += std::to_string(v[i]);
  }
  return s;
}

std::string join_words(const std::vector<std::string>& v, char sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += v[i];
  }
  return s;
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

RankRow bracket_closure_rank(const SkewAlgebroid& a, const Vec& q, int max_depth) {
  if (max_depth < 0) throw PreconditionError("max_depth must be at least 1");
  Tower tower(a);
  return rank_row(tower, a.base_dim(), q, max_depth == 0 ? 2 * a.base_dim() : max_depth);
}

std::string to_string(Verdict v) {
  return v == Verdict::CompletelyNonholonomic ? "completely_nonholonomic" : "rank_deficient";
}

NonholonomyReport verdict(const SkewAlgebroid& a, const std::vector<Vec>& points, int max_depth) {
  if (points.empty()) throw PreconditionError("verdict needs at least one sample point");
  Tower tower(a);
  const int m = a.base_dim();
  const int depth = max_depth == 0 ? 2 * m : max_depth;
  NonholonomyReport r;
  r.min_rank = m;
  bool all = true;
  for (const auto& q : points) {
    r.rows.push_back(rank_row(tower, m, q, depth));
    all = all && r.rows.back().complete;
    r.min_rank = std::min(r.min_rank, r.rows.back().stabilized);
    r.max_rank = std::max(r.max_rank, r.rows.back().stabilized);
  }
  r.verdict = all ? Verdict::CompletelyNonholonomic : Verdict::RankDeficient;
  return r;
}

void NonholonomyReport::write_table(std::ostream& out, const std::vector<std::string>& coords) const {
  char buf[64];
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& row = rows[k];
    std::string point;
    for (std::size_t i = 0; i < coords.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%s%s=%.6g", i ? "," : "", coords[i].c_str(), row.q(static_cast<Eigen::Index>(i)));
      point += buf;
    }
    out << "point " << k + 1 << "  " << point << "  ranks " << join_ints(row.ranks, ' ') << "  stabilized "
        << row.stabilized << (row.complete ? "  complete" : "  deficient");
    if (!row.witnesses.empty()) out << "  via " << join_words(row.witnesses, ' ');
    out << '\n';
  }
  out << "verdict: " << to_string(verdict) << " (stabilized rank " << min_rank;
  if (max_rank != min_rank) out << ".." << max_rank;
  out << " of " << coords.size() << ")\n";
}

void NonholonomyReport::write_csv(std::ostream& out, const std::vector<std::string>& coords) const {
  out << "point";
  for (const auto& c : coords) out << ',' << c;
  out << ",ranks,stabilized,complete,witnesses\n";
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& row = rows[k];
    out << k + 1;
    for (Eigen::Index i = 0; i < row.q.size(); ++i) out << ',' << fmt(row.q(i));
    out << ',' << join_ints(row.ranks, ';') << ',' << row.stabilized << ',' << (row.complete ? 1 : 0) << ','
        << join_words(row.witnesses, ';') << '\n';
  }
}

std::vector<Vec> sample_orbit(const SkewAlgebroid& a, const Vec& q0, const OrbitParams& p) {
  if (p.n_steps < 0 || !(p.step_time > 0) || p.substeps < 1) throw PreconditionError("invalid orbit parameters");
  Rng rng(p.seed);
  std::vector<Vec> points{q0};
  Vec q = q0;
  double elapsed = 0.0;
  for (int step = 0; step < p.n_steps; ++step) {
    const int gen = rng.index(a.rank());
    const double tau = rng.uniform(-p.step_time, p.step_time);
    const double h = tau / p.substeps;
    auto f = [&](const Vec& y) -> Vec {
      try {
        return a.anchor(y).col(gen);
      } catch (const EvalError& e) {
        throw IntegrationError(e.what(), elapsed);
      }
    };
    for (int s = 0; s < p.substeps; ++s) {
      const Vec k1 = f(q);
      const Vec k2 = f(q + (h / 2) * k1);
      const Vec k3 = f(q + (h / 2) * k2);
      const Vec k4 = f(q + h * k3);
      q += (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    elapsed += std::abs(tau);
    if (!a.in_domain(q)) throw IntegrationError("orbit left the chart domain", elapsed);
    points.push_back(q);
  }
  return points;
}

double constancy_on_orbit(const SkewAlgebroid& a, const ScalarFn& f, const Vec& q0, const OrbitParams& p) {
  const auto points = sample_orbit(a, q0, p);
  const double f0 = f(q0);
  double dev = 0.0;
  for (const auto& q : points) {
    const double df = d_function(a, f, q).lpNorm<Eigen::Infinity>();
    if (df > 1e-6) throw PreconditionError("d^D f does not vanish on the orbit (" + std::to_string(df) + ")");
    dev = std::max(dev, std::abs(f(q) - f0));
  }
  return dev;
}

}  // namespace skewalg
