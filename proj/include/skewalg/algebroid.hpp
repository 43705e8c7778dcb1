#pragma once

// Skew-symmetric algebroids over a single coordinate chart, described in a
// local frame {X_1..X_n}: anchor rho^i_a(q) and structure functions
// C^g_ab(q), with [[X_a, X_b]] = C^g_ab X_g.

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "skewalg/expr.hpp"
#include "skewalg/linalg.hpp"

namespace skewalg {

/// Dense C^g_ab at one point; antisymmetric in (a, b).
class StructureTensor {
 public:
  explicit StructureTensor(int n = 0) : n_(n), c_(static_cast<std::size_t>(n) * n * n, 0.0) {}

  int rank() const { return n_; }
  double operator()(int a, int b, int g) const { return c_[index(a, b, g)]; }
  void set_pair(int a, int b, int g, double v) {
    c_[index(a, b, g)] = v;
    c_[index(b, a, g)] = -v;
  }
  /// Frame components of [[s, t]] for constant-coefficient sections s, t.
  Vec bracket(const Vec& s, const Vec& t) const;
  double max_abs() const;

 private:
  std::size_t index(int a, int b, int g) const {
    return (static_cast<std::size_t>(a) * n_ + b) * n_ + g;
  }
  int n_;
  std::vector<double> c_;
};

struct StructureEntry {
  int a, b, g;  // a < b
  Expression value;
};

struct ChartDomain {
  /// Sampling box per coordinate (also the default random-point range).
  std::vector<std::pair<double, double>> sample_box;
  /// Points with |expr| < min_abs are outside the chart.
  struct Exclusion {
    Expression expr;
    double min_abs;
  };
  std::vector<Exclusion> exclude;
};

struct AlgebroidSpec {
  std::vector<std::string> coords;
  std::vector<std::string> labels;
  VarBinding params;
  std::vector<std::vector<Expression>> anchor;  // [label][coord]
  std::vector<StructureEntry> structure;
  ChartDomain domain;
  bool lie_algebroid = false;
};

class SkewAlgebroid {
 public:
  SkewAlgebroid() = default;
  explicit SkewAlgebroid(AlgebroidSpec spec);

  /// Structure functions supplied as a numeric evaluator instead of
  /// expressions; spec.structure is kept only for display.
  SkewAlgebroid(AlgebroidSpec spec, std::function<StructureTensor(const Vec&)> structure);

  int base_dim() const;
  int rank() const;
  const AlgebroidSpec& spec() const;
  const std::vector<std::string>& coords() const { return spec().coords; }
  const std::vector<std::string>& labels() const { return spec().labels; }
  const VarBinding& params() const { return spec().params; }
  bool lie_algebroid() const { return spec().lie_algebroid; }
  bool has_structure_expressions() const;

  /// m x n; column a is rho(X_a)(q).
  Mat anchor(const Vec& q) const;
  StructureTensor structure(const Vec& q) const;

  bool in_domain(const Vec& q) const;
  Vec sample_point(Rng& rng) const;
  int coord_index(const std::string& name) const;

  /// Variable names of functions on the dual bundle: coordinates, p1..pn.
  std::vector<std::string> dual_names() const;

  /// Compile an expression over (coords, params, extra) into a function of q.
  ScalarFn compile_base(const Expression& e, const VarBinding& extra = {}) const;
  /// Same over (coords, p1..pn, params, extra) as a function of x = (q, p).
  ScalarFn compile_dual(const Expression& e, const VarBinding& extra = {}) const;

  struct Impl;

 private:
  std::shared_ptr<const Impl> impl_;
};

/// Tangent bundle of R^m in the coordinate frame.
SkewAlgebroid standard_tangent(std::vector<std::string> coords, ChartDomain domain = {});

/// Change of frame: X'_a = sum_i E_ai e_i for the parent frame {e_i}.
/// E is square and invertible; entries are expressions over the parent's
/// coordinates and parameters.
SkewAlgebroid framed_algebroid(const SkewAlgebroid& parent, std::vector<std::string> labels,
                               std::vector<std::vector<Expression>> e);

/// Constrained algebroid on D from an ambient frame whose first n_d vectors
/// span D and the rest span its orthogonal complement.
SkewAlgebroid restrict_constrained(const SkewAlgebroid& ambient, int n_d);

/// Section of the dual bundle, components alpha_g(q) in the dual frame.
class Section1Form {
 public:
  Section1Form() = default;
  Section1Form(const SkewAlgebroid& a, std::vector<Expression> components,
               const VarBinding& constants = {});
  explicit Section1Form(VectorFn fn) : fn_(std::move(fn)) {}

  Vec operator()(const Vec& q) const { return fn_(q); }
  const std::vector<Expression>& components() const { return components_; }
  const VectorFn& function() const { return fn_; }

 private:
  VectorFn fn_;
  std::vector<Expression> components_;
};

/// Values of a k-form at a point: fully antisymmetric n^k table.
class FormValue {
 public:
  FormValue() = default;
  FormValue(int n, int degree);

  int rank() const { return n_; }
  int degree() const { return k_; }
  double at(const std::vector<int>& idx) const { return data_[offset(idx)]; }
  /// Writes v at idx and the signed value at every permutation of idx.
  void set_sorted(std::vector<int> idx, double v);
  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }
  double max_abs() const;

 private:
  std::size_t offset(const std::vector<int>& idx) const;
  int n_ = 0, k_ = 0;
  std::vector<double> data_;
};

class KForm {
 public:
  KForm(int rank, int degree, std::function<FormValue(const Vec&)> fn);
  /// Components given on strictly increasing index tuples.
  static KForm from_components(const SkewAlgebroid& a, int degree,
                               const std::map<std::vector<int>, Expression>& components,
                               const VarBinding& extra = {});
  static KForm from_function(int rank, ScalarFn f);
  static KForm from_section(int rank, VectorFn alpha);

  int rank() const { return n_; }
  int degree() const { return k_; }
  FormValue operator()(const Vec& q) const { return fn_(q); }

 private:
  int n_, k_;
  std::function<FormValue(const Vec&)> fn_;
};

/// Strictly increasing k-tuples out of {0..n-1}.
std::vector<std::vector<int>> sorted_tuples(int n, int k);

// d^D on functions, (d^D f)_g = rho^i_g df/dq^i.
Vec d_function(const SkewAlgebroid& a, const ScalarFn& f, const Vec& q, FdOptions fd = {});

// d^D on 1-forms; entry (g, v) = rho_g(alpha_v) - rho_v(alpha_g) - C^d_gv alpha_d.
Mat d_oneform(const SkewAlgebroid& a, const VectorFn& alpha, const Vec& q, FdOptions fd = {});

FormValue d_kform(const SkewAlgebroid& a, const KForm& w, const Vec& q, FdOptions fd = {});

/// ((d^D)^2 f)(X_a, X_b), computed through d_oneform(d_function f) and
/// cross-checked against ([rho X_a, rho X_b] - rho[[X_a, X_b]]) f.
Mat curvature_of_function(const SkewAlgebroid& a, const ScalarFn& f, const Vec& q);

/// The bracket-defect route of curvature_of_function on its own.
Mat curvature_by_bracket_defect(const SkewAlgebroid& a, const ScalarFn& f, const Vec& q);

using BracketEvaluator = std::function<double(const ScalarFn&, const ScalarFn&, const Vec&)>;

struct ExtractedStructure {
  Mat anchor;  // m x n
  StructureTensor structure;
};

/// Recover rho and C at q from a bracket of functions on the dual bundle.
ExtractedStructure extract_structure(const BracketEvaluator& bracket, int m, int n, const Vec& q);

}  // namespace skewalg
