#include "skewalg/algebroid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <set>

namespace skewalg {

namespace {

VarBinding merged(const VarBinding& base, const VarBinding& extra) {
  VarBinding out = base;
  for (const auto& [k, v] : extra.entries()) out.set(k, v);
  return out;
}

// Program over a fixed layout: leading slots are filled per call, the tail
// holds bound constants.
class BoundProgram {
 public:
  BoundProgram(const Expression& e, std::vector<std::string> lead, const VarBinding& tail) {
    std::vector<std::string> layout = std::move(lead);
    lead_size_ = layout.size();
    for (const auto& [k, v] : tail.entries()) {
      layout.push_back(k);
      tail_.push_back(v);
    }
    program_ = Program(e, layout);
  }

  double operator()(const Vec& x) const {
    std::vector<double> slots(lead_size_ + tail_.size());
    for (std::size_t i = 0; i < lead_size_; ++i) slots[i] = x(static_cast<Eigen::Index>(i));
    std::copy(tail_.begin(), tail_.end(), slots.begin() + static_cast<std::ptrdiff_t>(lead_size_));
    return program_(slots);
  }

 private:
  Program program_;
  std::size_t lead_size_ = 0;
  std::vector<double> tail_;
};

int permutation_sign(const std::vector<int>& perm) {
  int inversions = 0;
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t j = i + 1; j < perm.size(); ++j)
      if (perm[i] > perm[j]) ++inversions;
  return inversions % 2 == 0 ? 1 : -1;
}

std::vector<int> without(const std::vector<int>& idx, std::size_t skip1, std::size_t skip2 = SIZE_MAX) {
  std::vector<int> out;
  for (std::size_t i = 0; i < idx.size(); ++i)
    if (i != skip1 && i != skip2) out.push_back(idx[i]);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// StructureTensor

Vec StructureTensor::bracket(const Vec& s, const Vec& t) const {
  Vec out = Vec::Zero(n_);
  for (int a = 0; a < n_; ++a) {
    if (s(a) == 0.0) continue;
    for (int b = 0; b < n_; ++b) {
      const double st = s(a) * t(b);
      if (st == 0.0) continue;
      for (int g = 0; g < n_; ++g) out(g) += st * (*this)(a, b, g);
    }
  }
  return out;
}

double StructureTensor::max_abs() const {
  double m = 0.0;
  for (double v : c_) m = std::max(m, std::abs(v));
  return m;
}

// ---------------------------------------------------------------------------
// SkewAlgebroid

struct SkewAlgebroid::Impl {
  AlgebroidSpec spec;
  std::vector<std::vector<BoundProgram>> anchor;  // [label][coord]
  struct Entry {
    int a, b, g;
    BoundProgram value;
  };
  std::vector<Entry> structure;
  std::function<StructureTensor(const Vec&)> structure_fn;
  std::vector<std::pair<BoundProgram, double>> exclude;
};

namespace {

void validate_shape(const AlgebroidSpec& s) {
  const auto m = s.coords.size();
  const auto n = s.labels.size();
  if (m == 0) throw ModelError("algebroid needs at least one base coordinate");
  if (n == 0) throw ModelError("algebroid needs at least one frame label");
  if (s.anchor.size() != n) throw ModelError("anchor has " + std::to_string(s.anchor.size()) + " rows, expected " + std::to_string(n));
  for (const auto& row : s.anchor)
    if (row.size() != m) throw ModelError("anchor row has wrong arity");
  std::set<std::string> names(s.coords.begin(), s.coords.end());
  if (names.size() != m) throw ModelError("duplicate coordinate name");
  std::set<std::string> labels(s.labels.begin(), s.labels.end());
  if (labels.size() != n) throw ModelError("duplicate frame label");
  std::set<std::pair<std::pair<int, int>, int>> seen;
  for (const auto& e : s.structure) {
    if (e.a < 0 || e.b < 0 || e.g < 0 || e.a >= static_cast<int>(n) || e.b >= static_cast<int>(n) ||
        e.g >= static_cast<int>(n))
      throw ModelError("structure index out of range");
    if (e.a >= e.b) throw ModelError("structure entries must have a < b");
    if (!seen.insert({{e.a, e.b}, e.g}).second) throw ModelError("duplicate structure entry");
  }
  if (!s.domain.sample_box.empty() && s.domain.sample_box.size() != m)
    throw ModelError("sample box arity does not match coordinates");
}

template <class F>
auto with_model_context(const std::string& what, F&& f) {
  try {
    return f();
  } catch (const EvalError& e) {
    throw ModelError(what + ": " + e.what());
  }
}

std::shared_ptr<SkewAlgebroid::Impl> build_impl(AlgebroidSpec spec) {
  validate_shape(spec);
  auto impl = std::make_shared<SkewAlgebroid::Impl>();
  const auto& coords = spec.coords;
  for (std::size_t a = 0; a < spec.anchor.size(); ++a) {
    std::vector<BoundProgram> row;
    for (std::size_t i = 0; i < coords.size(); ++i)
      row.push_back(with_model_context("anchor of " + spec.labels[a], [&] {
        return BoundProgram(spec.anchor[a][i], coords, spec.params);
      }));
    impl->anchor.push_back(std::move(row));
  }
  for (const auto& e : spec.structure)
    impl->structure.push_back({e.a, e.b, e.g, with_model_context("structure function", [&] {
                                 return BoundProgram(e.value, coords, spec.params);
                               })});
  for (const auto& ex : spec.domain.exclude)
    impl->exclude.emplace_back(
        with_model_context("chart exclusion", [&] { return BoundProgram(ex.expr, coords, spec.params); }),
        ex.min_abs);
  impl->spec = std::move(spec);
  return impl;
}

}  // namespace

SkewAlgebroid::SkewAlgebroid(AlgebroidSpec spec) : impl_(build_impl(std::move(spec))) {}

SkewAlgebroid::SkewAlgebroid(AlgebroidSpec spec, std::function<StructureTensor(const Vec&)> structure) {
  auto impl = build_impl(std::move(spec));
  impl->structure.clear();
  impl->structure_fn = std::move(structure);
  impl_ = std::move(impl);
}

int SkewAlgebroid::base_dim() const { return static_cast<int>(impl_->spec.coords.size()); }
int SkewAlgebroid::rank() const { return static_cast<int>(impl_->spec.labels.size()); }
const AlgebroidSpec& SkewAlgebroid::spec() const { return impl_->spec; }
bool SkewAlgebroid::has_structure_expressions() const { return !impl_->structure_fn; }

Mat SkewAlgebroid::anchor(const Vec& q) const {
  const int m = base_dim(), n = rank();
  Mat r(m, n);
  for (int a = 0; a < n; ++a)
    for (int i = 0; i < m; ++i) r(i, a) = impl_->anchor[a][i](q);
  return r;
}

StructureTensor SkewAlgebroid::structure(const Vec& q) const {
  if (impl_->structure_fn) return impl_->structure_fn(q);
  StructureTensor c(rank());
  for (const auto& e : impl_->structure) c.set_pair(e.a, e.b, e.g, e.value(q));
  return c;
}

bool SkewAlgebroid::in_domain(const Vec& q) const {
  if (!q.allFinite()) return false;
  for (const auto& [p, min_abs] : impl_->exclude) {
    try {
      if (!(std::abs(p(q)) >= min_abs)) return false;
    } catch (const EvalError&) {
      return false;
    }
  }
  return true;
}

Vec SkewAlgebroid::sample_point(Rng& rng) const {
  const int m = base_dim();
  const auto& box = impl_->spec.domain.sample_box;
  for (int attempt = 0; attempt < 10000; ++attempt) {
    Vec q(m);
    for (int i = 0; i < m; ++i) {
      const auto [lo, hi] = box.empty() ? std::pair{-1.0, 1.0} : box[i];
      q(i) = rng.uniform(lo, hi);
    }
    if (in_domain(q)) return q;
  }
  throw ModelError("could not sample a point inside the chart domain");
}

int SkewAlgebroid::coord_index(const std::string& name) const {
  const auto& c = coords();
  const auto it = std::find(c.begin(), c.end(), name);
  if (it == c.end()) throw ModelError("unknown coordinate '" + name + "'");
  return static_cast<int>(it - c.begin());
}

std::vector<std::string> SkewAlgebroid::dual_names() const {
  std::vector<std::string> names = coords();
  for (int a = 1; a <= rank(); ++a) names.push_back("p" + std::to_string(a));
  return names;
}

ScalarFn SkewAlgebroid::compile_base(const Expression& e, const VarBinding& extra) const {
  BoundProgram p(e, coords(), merged(params(), extra));
  return [p = std::move(p)](const Vec& q) { return p(q); };
}

ScalarFn SkewAlgebroid::compile_dual(const Expression& e, const VarBinding& extra) const {
  BoundProgram p(e, dual_names(), merged(params(), extra));
  return [p = std::move(p)](const Vec& x) { return p(x); };
}

// ---------------------------------------------------------------------------
// Constructions

SkewAlgebroid standard_tangent(std::vector<std::string> coords, ChartDomain domain) {
  AlgebroidSpec s;
  const auto m = coords.size();
  for (const auto& c : coords) s.labels.push_back("d_" + c);
  s.coords = std::move(coords);
  s.anchor.assign(m, std::vector<Expression>(m));
  for (std::size_t i = 0; i < m; ++i) s.anchor[i][i] = Expression::number(1.0);
  s.domain = std::move(domain);
  s.lie_algebroid = true;
  return SkewAlgebroid(std::move(s));
}

SkewAlgebroid framed_algebroid(const SkewAlgebroid& parent, std::vector<std::string> labels,
                               std::vector<std::vector<Expression>> e) {
  const int n = parent.rank();
  const int m = parent.base_dim();
  if (static_cast<int>(labels.size()) != n || static_cast<int>(e.size()) != n)
    throw ModelError("frame must have as many vectors as the parent rank");
  for (const auto& row : e)
    if (static_cast<int>(row.size()) != n) throw ModelError("frame vector has wrong arity");

  AlgebroidSpec s;
  s.coords = parent.coords();
  s.labels = std::move(labels);
  s.params = parent.params();
  s.domain = parent.spec().domain;
  s.lie_algebroid = parent.lie_algebroid();
  const auto& pa = parent.spec().anchor;
  s.anchor.assign(n, std::vector<Expression>(m));
  for (int a = 0; a < n; ++a)
    for (int i = 0; i < m; ++i) {
      Expression sum = Expression::number(0.0);
      for (int j = 0; j < n; ++j) sum = sum + e[a][j] * pa[j][i];
      s.anchor[a][i] = sum;
    }

  // Frame entries and their exact coordinate derivatives, compiled once.
  struct Compiled {
    std::vector<BoundProgram> e;   // n*n
    std::vector<BoundProgram> de;  // n*n*m
  };
  auto c = std::make_shared<Compiled>();
  for (int a = 0; a < n; ++a)
    for (int j = 0; j < n; ++j) {
      c->e.push_back(with_model_context("frame", [&] { return BoundProgram(e[a][j], s.coords, s.params); }));
      for (int i = 0; i < m; ++i)
        c->de.emplace_back(derivative(e[a][j], s.coords[i]), s.coords, s.params);
    }

  SkewAlgebroid shell(s);  // anchor evaluation for the new frame
  auto structure = [parent, shell, c, n, m](const Vec& q) {
    Mat ev(n, n);
    for (int a = 0; a < n; ++a)
      for (int j = 0; j < n; ++j) ev(a, j) = c->e[a * n + j](q);
    std::vector<Mat> dev(m, Mat(n, n));
    for (int a = 0; a < n; ++a)
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < m; ++i) dev[i](a, j) = c->de[(a * n + j) * m + i](q);
    const Mat rho = shell.anchor(q);  // m x n, new frame
    const StructureTensor cp = parent.structure(q);
    // rho(X_a)(E_bk) for all a, b, k.
    std::vector<Mat> drv(n, Mat::Zero(n, n));
    for (int a = 0; a < n; ++a)
      for (int i = 0; i < m; ++i)
        if (rho(i, a) != 0.0) drv[a] += rho(i, a) * dev[i];
    const auto lu = ev.transpose().partialPivLu();
    StructureTensor out(n);
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b) {
        Vec w = cp.bracket(ev.row(a).transpose(), ev.row(b).transpose());
        w += drv[a].row(b).transpose() - drv[b].row(a).transpose();
        const Vec coeff = lu.solve(w);
        for (int g = 0; g < n; ++g) out.set_pair(a, b, g, coeff(g));
      }
    return out;
  };
  return SkewAlgebroid(std::move(s), std::move(structure));
}

SkewAlgebroid restrict_constrained(const SkewAlgebroid& ambient, int n_d) {
  const int n = ambient.rank();
  if (n_d <= 0 || n_d > n) throw ModelError("split size " + std::to_string(n_d) + " inconsistent with rank " + std::to_string(n));
  AlgebroidSpec s;
  s.coords = ambient.coords();
  s.labels.assign(ambient.labels().begin(), ambient.labels().begin() + n_d);
  s.params = ambient.params();
  s.domain = ambient.spec().domain;
  s.lie_algebroid = false;
  s.anchor.assign(ambient.spec().anchor.begin(), ambient.spec().anchor.begin() + n_d);
  for (const auto& e : ambient.spec().structure)
    if (e.a < n_d && e.b < n_d && e.g < n_d) s.structure.push_back(e);
  auto structure = [ambient, n_d](const Vec& q) {
    const StructureTensor full = ambient.structure(q);
    StructureTensor out(n_d);
    for (int a = 0; a < n_d; ++a)
      for (int b = a + 1; b < n_d; ++b)
        for (int g = 0; g < n_d; ++g) out.set_pair(a, b, g, full(a, b, g));
    return out;
  };
  return SkewAlgebroid(std::move(s), std::move(structure));
}

// ---------------------------------------------------------------------------
// Sections and forms

Section1Form::Section1Form(const SkewAlgebroid& a, std::vector<Expression> components,
                           const VarBinding& constants)
    : components_(std::move(components)) {
  if (static_cast<int>(components_.size()) != a.rank())
    throw ModelError("section has " + std::to_string(components_.size()) + " components, expected " +
                     std::to_string(a.rank()));
  std::vector<ScalarFn> fns;
  for (const auto& c : components_) fns.push_back(a.compile_base(c, constants));
  fn_ = [fns = std::move(fns)](const Vec& q) {
    Vec v(static_cast<Eigen::Index>(fns.size()));
    for (std::size_t i = 0; i < fns.size(); ++i) v(static_cast<Eigen::Index>(i)) = fns[i](q);
    return v;
  };
}

FormValue::FormValue(int n, int degree) : n_(n), k_(degree) {
  std::size_t size = 1;
  for (int i = 0; i < degree; ++i) size *= static_cast<std::size_t>(n);
  data_.assign(size, 0.0);
}

std::size_t FormValue::offset(const std::vector<int>& idx) const {
  std::size_t off = 0;
  for (int i : idx) off = off * static_cast<std::size_t>(n_) + static_cast<std::size_t>(i);
  return off;
}

void FormValue::set_sorted(std::vector<int> idx, double v) {
  std::vector<int> perm(idx.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> permuted(idx.size());
  do {
    for (std::size_t i = 0; i < perm.size(); ++i) permuted[i] = idx[perm[i]];
    data_[offset(permuted)] = permutation_sign(perm) * v;
  } while (std::next_permutation(perm.begin(), perm.end()));
}

double FormValue::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

KForm::KForm(int rank, int degree, std::function<FormValue(const Vec&)> fn)
    : n_(rank), k_(degree), fn_(std::move(fn)) {
  if (degree < 0 || degree > rank) throw PreconditionError("form degree out of range");
}

KForm KForm::from_components(const SkewAlgebroid& a, int degree,
                             const std::map<std::vector<int>, Expression>& components,
                             const VarBinding& extra) {
  const int n = a.rank();
  std::vector<std::pair<std::vector<int>, ScalarFn>> fns;
  for (const auto& [idx, e] : components) {
    if (static_cast<int>(idx.size()) != degree) throw ModelError("form component has wrong degree");
    if (!std::is_sorted(idx.begin(), idx.end()) || std::adjacent_find(idx.begin(), idx.end()) != idx.end())
      throw ModelError("form components must use strictly increasing indices");
    fns.emplace_back(idx, a.compile_base(e, extra));
  }
  return KForm(n, degree, [n, degree, fns = std::move(fns)](const Vec& q) {
    FormValue v(n, degree);
    for (const auto& [idx, f] : fns) v.set_sorted(idx, f(q));
    return v;
  });
}

KForm KForm::from_function(int rank, ScalarFn f) {
  return KForm(rank, 0, [rank, f = std::move(f)](const Vec& q) {
    FormValue v(rank, 0);
    v.data()[0] = f(q);
    return v;
  });
}

KForm KForm::from_section(int rank, VectorFn alpha) {
  return KForm(rank, 1, [rank, alpha = std::move(alpha)](const Vec& q) {
    FormValue v(rank, 1);
    const Vec a = alpha(q);
    for (int i = 0; i < rank; ++i) v.data()[i] = a(i);
    return v;
  });
}

std::vector<std::vector<int>> sorted_tuples(int n, int k) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur;
  auto rec = [&](auto&& self, int start) -> void {
    if (static_cast<int>(cur.size()) == k) {
      out.push_back(cur);
      return;
    }
    for (int i = start; i < n; ++i) {
      cur.push_back(i);
      self(self, i + 1);
      cur.pop_back();
    }
  };
  rec(rec, 0);
  return out;
}

// ---------------------------------------------------------------------------
// Almost differential

Vec d_function(const SkewAlgebroid& a, const ScalarFn& f, const Vec& q, FdOptions fd) {
  return a.anchor(q).transpose() * fd_gradient(f, q, fd);
}

Mat d_oneform(const SkewAlgebroid& a, const VectorFn& alpha, const Vec& q, FdOptions fd) {
  const int n = a.rank();
  const Mat rho = a.anchor(q);
  const Vec al = alpha(q);
  const Mat jr = fd_jacobian(alpha, q, fd) * rho;  // (v, g) = rho_g(alpha_v)
  const StructureTensor c = a.structure(q);
  Mat out = jr.transpose() - jr;
  for (int g = 0; g < n; ++g)
    for (int v = 0; v < n; ++v) {
      double s = 0.0;
      for (int d = 0; d < n; ++d) s += c(g, v, d) * al(d);
      out(g, v) -= s;
    }
  return out;
}

FormValue d_kform(const SkewAlgebroid& a, const KForm& w, const Vec& q, FdOptions fd) {
  const int n = a.rank();
  const int k = w.degree();
  if (w.rank() != n) throw PreconditionError("form rank does not match the algebroid");
  if (k + 1 > n) throw PreconditionError("degree " + std::to_string(k + 1) + " exceeds rank " + std::to_string(n));
  const FormValue w0 = w(q);
  const auto size = static_cast<Eigen::Index>(w0.data().size());
  const VectorFn flat = [&](const Vec& x) {
    const FormValue v = w(x);
    return Vec(Eigen::Map<const Vec>(v.data().data(), size));
  };
  const Mat drho = fd_jacobian(flat, q, fd) * a.anchor(q);  // (I, g) = rho_g(w_I)
  const StructureTensor c = a.structure(q);

  auto flat_index = [n](const std::vector<int>& idx) {
    Eigen::Index off = 0;
    for (int i : idx) off = off * n + i;
    return off;
  };

  FormValue out(n, k + 1);
  for (const auto& idx : sorted_tuples(n, k + 1)) {
    double s = 0.0;
    for (int j = 0; j <= k; ++j) {
      const double sign = j % 2 == 0 ? 1.0 : -1.0;
      s += sign * drho(flat_index(without(idx, static_cast<std::size_t>(j))), idx[j]);
    }
    for (int j = 0; j <= k; ++j)
      for (int l = j + 1; l <= k; ++l) {
        const double sign = (j + l) % 2 == 0 ? 1.0 : -1.0;
        const std::vector<int> rest = without(idx, static_cast<std::size_t>(j), static_cast<std::size_t>(l));
        for (int d = 0; d < n; ++d) {
          const double cd = c(idx[j], idx[l], d);
          if (cd == 0.0) continue;
          std::vector<int> args{d};
          args.insert(args.end(), rest.begin(), rest.end());
          s += sign * cd * w0.at(args);
        }
      }
    out.set_sorted(idx, s);
  }
  return out;
}

Mat curvature_by_bracket_defect(const SkewAlgebroid& a, const ScalarFn& f, const Vec& q) {
  const int m = a.base_dim(), n = a.rank();
  const Mat rho = a.anchor(q);
  const VectorFn flat = [&](const Vec& x) {
    const Mat r = a.anchor(x);
    return Vec(Eigen::Map<const Vec>(r.data(), r.size()));
  };
  const Mat jac = fd_jacobian(flat, q);  // (i + m*a, j) = d rho^i_a / dq^j
  const StructureTensor c = a.structure(q);
  const Vec grad = fd_gradient(f, q);
  std::vector<Mat> dr(n);
  for (int k = 0; k < n; ++k) dr[k] = jac.middleRows(static_cast<Eigen::Index>(k) * m, m);
  Mat out = Mat::Zero(n, n);
  for (int x = 0; x < n; ++x)
    for (int y = x + 1; y < n; ++y) {
      Vec v = dr[y] * rho.col(x) - dr[x] * rho.col(y);
      for (int g = 0; g < n; ++g) v -= c(x, y, g) * rho.col(g);
      out(x, y) = grad.dot(v);
      out(y, x) = -out(x, y);
    }
  return out;
}

Mat curvature_of_function(const SkewAlgebroid& a, const ScalarFn& f, const Vec& q) {
  const FdOptions nested{1e-4, Stencil::Central2};
  const VectorFn df = [&](const Vec& x) { return d_function(a, f, x, nested); };
  const Mat route_a = d_oneform(a, df, q, nested);
  const Mat route_b = curvature_by_bracket_defect(a, f, q);
  const double gap = max_abs(route_a - route_b);
  if (gap > 1e-5)
    throw ConsistencyError("curvature routes disagree by " + std::to_string(gap) +
                           "; anchor and structure functions are inconsistent");
  return route_a;
}

// ---------------------------------------------------------------------------
// Structure extraction

ExtractedStructure extract_structure(const BracketEvaluator& bracket, int m, int n, const Vec& q) {
  auto coord = [](int k) -> ScalarFn { return [k](const Vec& x) { return x(k); }; };
  auto at_fiber = [&](const Vec& p) {
    Vec x(m + n);
    x << q, p;
    return x;
  };
  ExtractedStructure out{Mat(m, n), StructureTensor(n)};
  const double linear_tol = 1e-6;

  std::vector<Vec> fibers{Vec::Zero(n)};
  for (int g = 0; g < n; ++g) fibers.push_back(Vec::Unit(n, g));
  Vec mixed(n);
  for (int g = 0; g < n; ++g) mixed(g) = 0.5 + 0.25 * g;
  fibers.push_back(mixed);

  for (int j = 0; j < m; ++j)
    for (int a = 0; a < n; ++a) {
      const double ref = bracket(coord(j), coord(m + a), at_fiber(fibers.front()));
      for (std::size_t f = 1; f < fibers.size(); ++f)
        if (std::abs(bracket(coord(j), coord(m + a), at_fiber(fibers[f])) - ref) > linear_tol)
          throw ConsistencyError("bracket {q, p} depends on the fiber point; not a linear bracket");
      out.anchor(j, a) = ref;
    }

  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) {
      Vec cg(n);
      for (int g = 0; g < n; ++g) cg(g) = -bracket(coord(m + a), coord(m + b), at_fiber(fibers[1 + g]));
      const double at_zero = bracket(coord(m + a), coord(m + b), at_fiber(fibers.front()));
      const double at_mixed = -bracket(coord(m + a), coord(m + b), at_fiber(mixed));
      if (std::abs(at_zero) > linear_tol || std::abs(at_mixed - cg.dot(mixed)) > linear_tol)
        throw ConsistencyError("bracket {p, p} is not linear in the fiber");
      for (int g = 0; g < n; ++g) out.structure.set_pair(a, b, g, cg(g));
    }
  return out;
}

}  // namespace skewalg
