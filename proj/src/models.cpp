#include "skewalg/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "skewalg/poisson.hpp"

#ifndef SKEWALG_MODEL_DIR
#define SKEWALG_MODEL_DIR "models"
#endif

namespace skewalg {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

// ---------------------------------------------------------------------------
// Reading

[[noreturn]] void fail(const std::string& where, const std::string& msg) {
  throw ModelError(where + ": " + msg);
}

const json& require(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) fail(where, "expected an object");
  const auto it = obj.find(key);
  if (it == obj.end()) fail(where, std::string("missing field '") + key + "'");
  return *it;
}

std::string child(const std::string& where, const std::string& key) { return where + "." + key; }
std::string child(const std::string& where, std::size_t i) { return where + "[" + std::to_string(i) + "]"; }

std::string read_string(const json& j, const std::string& where) {
  if (!j.is_string()) fail(where, "expected a string");
  return j.get<std::string>();
}

double read_number(const json& j, const std::string& where) {
  if (!j.is_number()) fail(where, "expected a number");
  return j.get<double>();
}

Expression read_expr(const json& j, const std::string& where) {
  if (j.is_number()) return Expression::number(j.get<double>());
  if (!j.is_string()) fail(where, "expected an expression string");
  try {
    return parse(j.get<std::string>());
  } catch (const ParseError& e) {
    fail(where, e.what());
  }
}

std::vector<std::string> read_names(const json& j, const std::string& where) {
  if (!j.is_array()) fail(where, "expected an array of names");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(read_string(j[i], child(where, i)));
  return out;
}

std::vector<Expression> read_expr_list(const json& j, const std::string& where) {
  if (!j.is_array()) fail(where, "expected an array of expressions");
  std::vector<Expression> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(read_expr(j[i], child(where, i)));
  return out;
}

Components read_components(const json& j, const std::string& where) {
  if (!j.is_object()) fail(where, "expected an object of components");
  Components out;
  for (const auto& [k, v] : j.items()) out.emplace_back(k, read_expr(v, child(where, k)));
  return out;
}

VarBinding read_binding(const json& j, const std::string& where) {
  if (!j.is_object()) fail(where, "expected an object of numbers");
  VarBinding b;
  for (const auto& [k, v] : j.items()) b.set(k, read_number(v, child(where, k)));
  return b;
}

std::vector<LabeledComponents> read_anchor(const json& j, const std::string& where) {
  if (!j.is_object()) fail(where, "expected an object keyed by frame label");
  std::vector<LabeledComponents> out;
  for (const auto& [k, v] : j.items()) out.push_back({k, read_components(v, child(where, k))});
  return out;
}

std::vector<StructureDecl> read_structure(const json& j, const std::string& where) {
  if (!j.is_array()) fail(where, "expected an array of brackets");
  std::vector<StructureDecl> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string w = child(where, i);
    const auto pair = read_names(require(j[i], "bracket", w), child(w, "bracket"));
    if (pair.size() != 2) fail(child(w, "bracket"), "expected two labels");
    out.push_back({pair[0], pair[1], read_components(require(j[i], "result", w), child(w, "result"))});
  }
  return out;
}

DomainDecl read_domain(const json& j, const std::string& where) {
  DomainDecl d;
  if (!j.is_object()) fail(where, "expected an object");
  if (j.contains("box")) {
    const auto& box = j["box"];
    if (!box.is_object()) fail(child(where, "box"), "expected an object keyed by coordinate");
    for (const auto& [k, v] : box.items()) {
      const std::string w = child(child(where, "box"), k);
      if (!v.is_array() || v.size() != 2) fail(w, "expected [lo, hi]");
      const double lo = read_number(v[0], w), hi = read_number(v[1], w);
      if (!(lo < hi)) fail(w, "empty interval");
      d.box.push_back({k, {lo, hi}});
    }
  }
  if (j.contains("exclude")) {
    const auto& ex = j["exclude"];
    if (!ex.is_array()) fail(child(where, "exclude"), "expected an array");
    for (std::size_t i = 0; i < ex.size(); ++i) {
      const std::string w = child(child(where, "exclude"), i);
      d.exclude.emplace_back(read_expr(require(ex[i], "expr", w), child(w, "expr")),
                             read_number(require(ex[i], "min_abs", w), child(w, "min_abs")));
    }
  }
  return d;
}

FrameDecl read_frame(const json& j, const std::string& where) {
  FrameDecl f;
  const auto& parent = require(j, "parent", where);
  if (parent.is_string()) {
    if (parent.get<std::string>() != "tangent") fail(child(where, "parent"), "expected \"tangent\" or an object");
  } else {
    const std::string w = child(where, "parent");
    ParentDecl p;
    p.labels = read_names(require(parent, "labels", w), child(w, "labels"));
    p.anchor = read_anchor(require(parent, "anchor", w), child(w, "anchor"));
    if (parent.contains("structure")) p.structure = read_structure(parent["structure"], child(w, "structure"));
    f.parent = std::move(p);
  }
  if (j.contains("metric")) {
    const auto& m = j["metric"];
    const std::string w = child(where, "metric");
    if (!m.is_array()) fail(w, "expected an array of [a, b, value]");
    for (std::size_t i = 0; i < m.size(); ++i) {
      const std::string wi = child(w, i);
      if (!m[i].is_array() || m[i].size() != 3) fail(wi, "expected [a, b, value]");
      f.metric.push_back({read_string(m[i][0], wi), read_string(m[i][1], wi), read_expr(m[i][2], wi)});
    }
  }
  const auto& vecs = require(j, "vectors", where);
  if (!vecs.is_array()) fail(child(where, "vectors"), "expected an array");
  for (std::size_t i = 0; i < vecs.size(); ++i) {
    const std::string w = child(child(where, "vectors"), i);
    f.vectors.push_back({read_string(require(vecs[i], "label", w), child(w, "label")),
                         read_components(require(vecs[i], "components", w), child(w, "components"))});
  }
  if (j.contains("split")) {
    const auto& s = j["split"];
    if (!s.is_number_integer() || s.get<int>() < 1) fail(child(where, "split"), "expected a positive integer");
    f.split = s.get<int>();
  }
  return f;
}

ModelSpec spec_from_json(const json& j) {
  const std::string w = "model";
  if (!j.is_object()) fail(w, "expected a JSON object");
  ModelSpec s;
  s.name = read_string(require(j, "name", w), "name");
  if (j.contains("source")) s.source = read_string(j["source"], "source");
  if (j.contains("parameters")) s.parameters = read_binding(j["parameters"], "parameters");
  if (j.contains("definitions")) {
    const auto& d = j["definitions"];
    if (!d.is_array()) fail("definitions", "expected an array of [name, expression]");
    for (std::size_t i = 0; i < d.size(); ++i) {
      const std::string wi = child("definitions", i);
      if (!d[i].is_array() || d[i].size() != 2) fail(wi, "expected [name, expression]");
      s.definitions.emplace_back(read_string(d[i][0], wi), read_expr(d[i][1], wi));
    }
  }
  s.coordinates = read_names(require(j, "coordinates", w), "coordinates");
  if (j.contains("frame_of")) {
    s.frame = read_frame(j["frame_of"], "frame_of");
    if (j.contains("anchor") || j.contains("labels") || j.contains("structure"))
      fail(w, "frame_of models take no labels, anchor or structure");
  } else {
    s.labels = read_names(require(j, "labels", w), "labels");
    s.anchor = read_anchor(require(j, "anchor", w), "anchor");
    if (j.contains("structure")) s.structure = read_structure(j["structure"], "structure");
  }
  if (j.contains("lie_algebroid")) {
    if (!j["lie_algebroid"].is_boolean()) fail("lie_algebroid", "expected a boolean");
    s.lie_algebroid = j["lie_algebroid"].get<bool>();
  }
  if (j.contains("chart_domain")) s.domain = read_domain(j["chart_domain"], "chart_domain");
  if (j.contains("potential")) s.potential = read_expr(j["potential"], "potential");
  if (j.contains("sections")) {
    const auto& secs = j["sections"];
    if (!secs.is_object()) fail("sections", "expected an object keyed by section name");
    for (const auto& [name, v] : secs.items()) {
      const std::string ws = child("sections", name);
      SectionDecl d;
      d.name = name;
      if (v.contains("constants")) d.constants = read_binding(v["constants"], child(ws, "constants"));
      d.components = read_expr_list(require(v, "components", ws), child(ws, "components"));
      s.sections.push_back(std::move(d));
    }
  }
  if (j.contains("functions")) {
    const auto& f = j["functions"];
    if (!f.is_object()) fail("functions", "expected an object of expressions");
    for (const auto& [k, v] : f.items()) s.functions.emplace_back(k, read_expr(v, child("functions", k)));
  }
  if (j.contains("morphism")) {
    const auto& m = j["morphism"];
    MorphismDecl d;
    d.target = read_string(require(m, "target", "morphism"), "morphism.target");
    d.base_map = read_expr_list(require(m, "base_map", "morphism"), "morphism.base_map");
    const auto& fm = require(m, "fiber_map", "morphism");
    if (!fm.is_array()) fail("morphism.fiber_map", "expected an array of rows");
    for (std::size_t i = 0; i < fm.size(); ++i) d.fiber_map.push_back(read_expr_list(fm[i], child("morphism.fiber_map", i)));
    s.morphism = std::move(d);
  }
  if (j.contains("closed_form")) s.closed_form = read_string(j["closed_form"], "closed_form");
  return s;
}

// ---------------------------------------------------------------------------
// Writing

json write_components(const Components& c) {
  json j = json::object();
  for (const auto& [k, e] : c) j[k] = to_string(e);
  return j;
}

json write_binding(const VarBinding& b) {
  json j = json::object();
  for (const auto& [k, v] : b.entries()) j[k] = v;
  return j;
}

json write_anchor(const std::vector<LabeledComponents>& a) {
  json j = json::object();
  for (const auto& row : a) j[row.label] = write_components(row.components);
  return j;
}

json write_structure(const std::vector<StructureDecl>& s) {
  json j = json::array();
  for (const auto& d : s) j.push_back({{"bracket", {d.left, d.right}}, {"result", write_components(d.result)}});
  return j;
}

json write_exprs(const std::vector<Expression>& v) {
  json j = json::array();
  for (const auto& e : v) j.push_back(to_string(e));
  return j;
}

json spec_to_json(const ModelSpec& s) {
  json j = json::object();
  j["name"] = s.name;
  if (!s.source.empty()) j["source"] = s.source;
  j["parameters"] = write_binding(s.parameters);
  if (!s.definitions.empty()) {
    json d = json::array();
    for (const auto& [k, e] : s.definitions) d.push_back({k, to_string(e)});
    j["definitions"] = d;
  }
  j["coordinates"] = s.coordinates;
  if (s.frame) {
    json f = json::object();
    if (s.frame->parent) {
      const auto& p = *s.frame->parent;
      json pj = json::object();
      pj["labels"] = p.labels;
      pj["anchor"] = write_anchor(p.anchor);
      pj["structure"] = write_structure(p.structure);
      f["parent"] = pj;
    } else {
      f["parent"] = "tangent";
    }
    if (!s.frame->metric.empty()) {
      json m = json::array();
      for (const auto& e : s.frame->metric) m.push_back({e.a, e.b, to_string(e.value)});
      f["metric"] = m;
    }
    json v = json::array();
    for (const auto& row : s.frame->vectors)
      v.push_back({{"label", row.label}, {"components", write_components(row.components)}});
    f["vectors"] = v;
    if (s.frame->split > 0) f["split"] = s.frame->split;
    j["frame_of"] = f;
  } else {
    j["labels"] = s.labels;
    j["anchor"] = write_anchor(s.anchor);
    j["structure"] = write_structure(s.structure);
  }
  j["lie_algebroid"] = s.lie_algebroid;
  if (!s.domain.box.empty() || !s.domain.exclude.empty()) {
    json d = json::object();
    if (!s.domain.box.empty()) {
      json box = json::object();
      for (const auto& [k, iv] : s.domain.box) box[k] = {iv.first, iv.second};
      d["box"] = box;
    }
    if (!s.domain.exclude.empty()) {
      json ex = json::array();
      for (const auto& [e, v] : s.domain.exclude) ex.push_back({{"expr", to_string(e)}, {"min_abs", v}});
      d["exclude"] = ex;
    }
    j["chart_domain"] = d;
  }
  if (s.potential) j["potential"] = to_string(*s.potential);
  if (!s.sections.empty()) {
    json secs = json::object();
    for (const auto& d : s.sections) {
      json sj = json::object();
      if (d.constants.size()) sj["constants"] = write_binding(d.constants);
      sj["components"] = write_exprs(d.components);
      secs[d.name] = sj;
    }
    j["sections"] = secs;
  }
  if (!s.functions.empty()) {
    json f = json::object();
    for (const auto& [k, e] : s.functions) f[k] = to_string(e);
    j["functions"] = f;
  }
  if (s.morphism) {
    json fm = json::array();
    for (const auto& row : s.morphism->fiber_map) fm.push_back(write_exprs(row));
    j["morphism"] = {{"target", s.morphism->target}, {"base_map", write_exprs(s.morphism->base_map)}, {"fiber_map", fm}};
  }
  if (!s.closed_form.empty()) j["closed_form"] = s.closed_form;
  return j;
}

// Every expression of a ModelSpec in a fixed order, for structural comparison.
void collect(const ModelSpec& s, std::vector<Expression>& out) {
  auto comps = [&](const Components& c) {
    for (const auto& [k, e] : c) out.push_back(e);
  };
  auto anchor = [&](const std::vector<LabeledComponents>& a) {
    for (const auto& row : a) comps(row.components);
  };
  auto structure = [&](const std::vector<StructureDecl>& st) {
    for (const auto& d : st) comps(d.result);
  };
  for (const auto& [k, e] : s.definitions) out.push_back(e);
  anchor(s.anchor);
  structure(s.structure);
  if (s.frame) {
    if (s.frame->parent) {
      anchor(s.frame->parent->anchor);
      structure(s.frame->parent->structure);
    }
    for (const auto& m : s.frame->metric) out.push_back(m.value);
    anchor(s.frame->vectors);
  }
  for (const auto& [e, v] : s.domain.exclude) out.push_back(e);
  if (s.potential) out.push_back(*s.potential);
  for (const auto& d : s.sections) out.insert(out.end(), d.components.begin(), d.components.end());
  for (const auto& [k, e] : s.functions) out.push_back(e);
  if (s.morphism) {
    out.insert(out.end(), s.morphism->base_map.begin(), s.morphism->base_map.end());
    for (const auto& row : s.morphism->fiber_map) out.insert(out.end(), row.begin(), row.end());
  }
}

// ---------------------------------------------------------------------------
// Building

int index_of(const std::vector<std::string>& names, const std::string& name, const std::string& where,
             const char* kind) {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) fail(where, std::string("unknown ") + kind + " '" + name + "'");
  return static_cast<int>(it - names.begin());
}

void check_variables(const Expression& e, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& v : e.free_variables())
    if (!allowed.count(v)) fail(where, "unknown name '" + v + "'");
}

class Builder {
 public:
  Builder(const ModelSpec& spec, const VarBinding& overrides) : spec_(spec) {
    params_ = spec.parameters;
    for (const auto& [k, v] : overrides.entries()) {
      if (!spec.parameters.contains(k)) fail("parameters", "unknown parameter '" + k + "'");
      params_.set(k, v);
    }
    for (const auto& c : spec.coordinates) base_names_.insert(c);
    for (const auto& [k, v] : params_.entries()) {
      if (base_names_.count(k)) fail("parameters", "'" + k + "' is also a coordinate");
      base_names_.insert(k);
    }
    for (std::size_t i = 0; i < spec.definitions.size(); ++i) {
      const auto& [name, e] = spec.definitions[i];
      const std::string w = child("definitions", i);
      if (base_names_.count(name)) fail(w, "'" + name + "' shadows a coordinate, parameter or definition");
      check_variables(e, base_names_, w);
      defs_.emplace_back(name, substitute(e, defs_));
      base_names_.insert(name);
    }
  }

  const VarBinding& params() const { return params_; }
  const std::vector<std::pair<std::string, Expression>>& defs() const { return defs_; }
  const std::set<std::string>& base_names() const { return base_names_; }

  Expression base_expr(const Expression& e, const std::string& where) const {
    check_variables(e, base_names_, where);
    return substitute(e, defs_);
  }

  ChartDomain domain() const {
    ChartDomain d;
    if (!spec_.domain.box.empty()) {
      d.sample_box.assign(spec_.coordinates.size(), {-1.0, 1.0});
      for (const auto& [k, iv] : spec_.domain.box)
        d.sample_box[index_of(spec_.coordinates, k, "chart_domain.box", "coordinate")] = iv;
    }
    for (std::size_t i = 0; i < spec_.domain.exclude.size(); ++i) {
      const auto& [e, v] = spec_.domain.exclude[i];
      d.exclude.push_back({base_expr(e, child("chart_domain.exclude", i)), v});
    }
    return d;
  }

  // Anchor matrix [label][coord] from sparse rows.
  std::vector<std::vector<Expression>> anchor(const std::vector<std::string>& labels,
                                              const std::vector<LabeledComponents>& rows,
                                              const std::string& where) const {
    std::vector<std::vector<Expression>> out(labels.size(), std::vector<Expression>(spec_.coordinates.size()));
    std::set<std::string> seen;
    for (const auto& row : rows) {
      const std::string w = child(where, row.label);
      const int a = index_of(labels, row.label, w, "frame label");
      if (!seen.insert(row.label).second) fail(w, "anchor given twice");
      for (const auto& [coord, e] : row.components)
        out[a][index_of(spec_.coordinates, coord, child(w, coord), "coordinate")] = base_expr(e, child(w, coord));
    }
    return out;
  }

  struct Structure {
    std::vector<StructureEntry> entries;
    // Entries also given in the opposite order: (normalized entry index, other value).
    std::vector<std::pair<std::size_t, Expression>> mirrored;
  };

  Structure structure(const std::vector<std::string>& labels, const std::vector<StructureDecl>& decls,
                      const std::string& where) const {
    Structure s;
    std::map<std::tuple<int, int, int>, std::pair<std::size_t, bool>> seen;  // -> (entry, given as a<b)
    for (std::size_t i = 0; i < decls.size(); ++i) {
      const auto& d = decls[i];
      const std::string w = child(where, i);
      const int l = index_of(labels, d.left, w, "frame label");
      const int r = index_of(labels, d.right, w, "frame label");
      if (l == r) fail(w, "bracket of a label with itself is zero by antisymmetry");
      for (const auto& [g_name, e] : d.result) {
        const int g = index_of(labels, g_name, child(w, g_name), "frame label");
        Expression value = base_expr(e, child(w, g_name));
        const bool ordered = l < r;
        const int a = std::min(l, r), b = std::max(l, r);
        const auto key = std::tuple{a, b, g};
        const auto it = seen.find(key);
        if (it == seen.end()) {
          seen[key] = {s.entries.size(), ordered};
          s.entries.push_back({a, b, g, ordered ? value : -value});
        } else if (it->second.second == ordered) {
          fail(child(w, g_name), "structure function given twice");
        } else {
          s.mirrored.emplace_back(it->second.first, ordered ? value : -value);
        }
      }
    }
    return s;
  }

 private:
  const ModelSpec& spec_;
  VarBinding params_;
  std::vector<std::pair<std::string, Expression>> defs_;
  std::set<std::string> base_names_;
};

SkewAlgebroid with_lie_flag(const SkewAlgebroid& a, bool lie) {
  if (a.lie_algebroid() == lie) return a;
  AlgebroidSpec s = a.spec();
  s.lie_algebroid = lie;
  if (a.has_structure_expressions()) return SkewAlgebroid(std::move(s));
  return SkewAlgebroid(std::move(s), [a](const Vec& q) { return a.structure(q); });
}

constexpr std::uint64_t kCheckSeed = 20240601;
constexpr int kCheckPoints = 5;
constexpr int kFramePoints = 20;

void check_antisymmetry(const SkewAlgebroid& a, const Builder::Structure& st) {
  if (st.mirrored.empty()) return;
  Rng rng(kCheckSeed);
  for (int k = 0; k < kCheckPoints; ++k) {
    const Vec q = a.sample_point(rng);
    for (const auto& [idx, other] : st.mirrored) {
      const auto& e = st.entries[idx];
      const double v1 = a.compile_base(e.value)(q);
      const double v2 = a.compile_base(other)(q);
      if (std::abs(v1 - v2) > 1e-9 * (1.0 + std::abs(v1)))
        throw ModelError("structure: C^" + a.labels()[e.g] + " for (" + a.labels()[e.a] + "," + a.labels()[e.b] +
                         ") and its reverse are not negatives of each other");
    }
  }
}

void check_jacobiator(const SkewAlgebroid& a) {
  const int m = a.base_dim(), n = a.rank();
  std::vector<ScalarFn> coord_fns;
  for (int i = 0; i < m + n; ++i) coord_fns.push_back([i](const Vec& x) { return x(i); });
  Rng rng(kCheckSeed);
  double worst = 0.0;
  for (int k = 0; k < kCheckPoints; ++k) {
    Vec x(m + n);
    x << a.sample_point(rng), rng.uniform_vec(n, -1.0, 1.0);
    for (int i = 0; i < m + n; ++i)
      for (int j = std::max(i + 1, m); j < m + n; ++j)
        for (int l = j + 1; l < m + n; ++l)
          worst = std::max(worst, std::abs(jacobiator(a, coord_fns[i], coord_fns[j], coord_fns[l], x)));
  }
  if (worst > 1e-3)
    throw ModelError("lie_algebroid: Jacobiator " + std::to_string(worst) + " exceeds 1e-3");
}

Mat eval_matrix(const SkewAlgebroid& a, const std::vector<std::vector<Expression>>& e, const Vec& q) {
  Mat out(static_cast<Eigen::Index>(e.size()), static_cast<Eigen::Index>(e.empty() ? 0 : e[0].size()));
  for (std::size_t r = 0; r < e.size(); ++r)
    for (std::size_t c = 0; c < e[r].size(); ++c)
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = a.compile_base(e[r][c])(q);
  return out;
}

// D-block orthonormal, and D orthogonal to the remaining vectors.
void check_orthonormal(const SkewAlgebroid& a, const std::vector<std::vector<Expression>>& frame,
                       const std::vector<std::vector<Expression>>& metric, int split) {
  const int n = static_cast<int>(frame.size());
  const int nd = split > 0 ? split : n;
  Rng rng(kCheckSeed);
  for (int k = 0; k < kFramePoints; ++k) {
    const Vec q = a.sample_point(rng);
    const Mat e = eval_matrix(a, frame, q);
    const Mat g = eval_matrix(a, metric, q);
    const Mat gram = e * g * e.transpose();
    const double off = (gram.topLeftCorner(nd, nd) - Mat::Identity(nd, nd)).cwiseAbs().maxCoeff();
    if (off > 1e-9) throw ModelError("frame_of: vectors are not orthonormal (defect " + std::to_string(off) + ")");
    if (nd < n) {
      const double cross = gram.topRightCorner(nd, n - nd).cwiseAbs().maxCoeff();
      if (cross > 1e-9)
        throw ModelError("frame_of: complement is not orthogonal to the constraint block (defect " +
                         std::to_string(cross) + ")");
    }
  }
}

SkewAlgebroid build_direct(const ModelSpec& spec, const Builder& b, const ChartDomain& domain) {
  AlgebroidSpec s;
  s.coords = spec.coordinates;
  s.labels = spec.labels;
  s.params = b.params();
  s.anchor = b.anchor(spec.labels, spec.anchor, "anchor");
  const auto st = b.structure(spec.labels, spec.structure, "structure");
  s.structure = st.entries;
  s.domain = domain;
  s.lie_algebroid = spec.lie_algebroid;
  SkewAlgebroid a(std::move(s));
  check_antisymmetry(a, st);
  return a;
}

SkewAlgebroid build_framed(const ModelSpec& spec, const Builder& b, const ChartDomain& domain) {
  const FrameDecl& f = *spec.frame;
  SkewAlgebroid parent;
  std::vector<std::string> basis;
  if (f.parent) {
    AlgebroidSpec p;
    p.coords = spec.coordinates;
    p.labels = f.parent->labels;
    p.params = b.params();
    p.anchor = b.anchor(p.labels, f.parent->anchor, "frame_of.parent.anchor");
    const auto st = b.structure(p.labels, f.parent->structure, "frame_of.parent.structure");
    p.structure = st.entries;
    p.domain = domain;
    p.lie_algebroid = true;
    parent = SkewAlgebroid(std::move(p));
    check_antisymmetry(parent, st);
    basis = f.parent->labels;
  } else {
    AlgebroidSpec p = standard_tangent(spec.coordinates, domain).spec();
    p.params = b.params();
    parent = SkewAlgebroid(std::move(p));
    basis = spec.coordinates;
  }
  const std::size_t n = basis.size();
  if (f.vectors.size() != n)
    fail("frame_of.vectors", "expected " + std::to_string(n) + " vectors, got " + std::to_string(f.vectors.size()));
  std::vector<std::string> labels;
  std::vector<std::vector<Expression>> e(n, std::vector<Expression>(n));
  for (std::size_t a = 0; a < n; ++a) {
    const std::string w = child("frame_of.vectors", a);
    labels.push_back(f.vectors[a].label);
    for (const auto& [k, v] : f.vectors[a].components)
      e[a][index_of(basis, k, child(w, k), "basis name")] = b.base_expr(v, child(w, k));
  }
  if (f.split > static_cast<int>(n)) fail("frame_of.split", "larger than the number of vectors");

  SkewAlgebroid framed = framed_algebroid(parent, labels, e);
  if (!f.metric.empty()) {
    std::vector<std::vector<Expression>> g(n, std::vector<Expression>(n));
    std::set<std::pair<int, int>> seen;
    for (std::size_t i = 0; i < f.metric.size(); ++i) {
      const std::string w = child("frame_of.metric", i);
      const int r = index_of(basis, f.metric[i].a, w, "basis name");
      const int c = index_of(basis, f.metric[i].b, w, "basis name");
      if (!seen.insert({std::min(r, c), std::max(r, c)}).second) fail(w, "metric entry given twice");
      g[r][c] = g[c][r] = b.base_expr(f.metric[i].value, w);
    }
    check_orthonormal(parent, e, g, f.split);
  }
  if (f.split > 0 && f.split < static_cast<int>(n)) framed = restrict_constrained(framed, f.split);
  return with_lie_flag(framed, spec.lie_algebroid);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot open model file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path executable_dir() {
  std::error_code ec;
  const fs::path exe = fs::read_symlink("/proc/self/exe", ec);
  return ec ? fs::path{} : exe.parent_path();
}

}  // namespace

// ---------------------------------------------------------------------------

ModelSpec parse_model_spec(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ModelError(std::string("model file is not valid JSON: ") + e.what());
  }
  return spec_from_json(j);
}

ModelSpec read_model_spec(const fs::path& path) {
  try {
    return parse_model_spec(read_file(path));
  } catch (const ModelError& e) {
    throw ModelError(path.filename().string() + ": " + e.what());
  }
}

std::string serialize_model_spec(const ModelSpec& spec) { return spec_to_json(spec).dump(2) + "\n"; }

bool same_model_spec(const ModelSpec& a, const ModelSpec& b) {
  if (spec_to_json(a) != spec_to_json(b)) return false;
  std::vector<Expression> ea, eb;
  collect(a, ea);
  collect(b, eb);
  if (ea.size() != eb.size()) return false;
  for (std::size_t i = 0; i < ea.size(); ++i)
    if (!ea[i].structurally_equal(eb[i])) return false;
  return true;
}

Model build_model(const ModelSpec& spec, const VarBinding& overrides) {
  Builder b(spec, overrides);
  Model model;
  model.spec = spec;
  model.params = b.params();
  const ChartDomain domain = b.domain();
  model.algebroid = spec.frame ? build_framed(spec, b, domain) : build_direct(spec, b, domain);
  const SkewAlgebroid& a = model.algebroid;

  // Everything else is validated by compiling it once.
  auto names = b.base_names();
  if (spec.potential) a.compile_base(b.base_expr(*spec.potential, "potential"));
  std::set<std::string> section_names;
  for (const auto& d : spec.sections) {
    const std::string w = child("sections", d.name);
    if (!section_names.insert(d.name).second) fail(w, "duplicate section");
    if (static_cast<int>(d.components.size()) != a.rank())
      fail(w, "expected " + std::to_string(a.rank()) + " components, got " + std::to_string(d.components.size()));
    auto allowed = names;
    for (const auto& [k, v] : d.constants.entries()) {
      if (names.count(k)) fail(child(w, "constants"), "'" + k + "' shadows another name");
      allowed.insert(k);
    }
    for (std::size_t i = 0; i < d.components.size(); ++i) check_variables(d.components[i], allowed, child(w, i));
  }
  for (const auto& [k, e] : spec.functions) check_variables(e, names, child("functions", k));

  if (spec.lie_algebroid) check_jacobiator(a);

  if (spec.morphism) {
    const auto& md = *spec.morphism;
    VarBinding target_overrides;
    const ModelSpec target_spec = read_model_spec(resolve_model(md.target));
    for (const auto& [k, v] : model.params.entries())
      if (target_spec.parameters.contains(k)) target_overrides.set(k, v);
    model.target = std::make_shared<Model>(build_model(target_spec, target_overrides));
    std::vector<Expression> base;
    for (std::size_t i = 0; i < md.base_map.size(); ++i)
      base.push_back(b.base_expr(md.base_map[i], child("morphism.base_map", i)));
    std::vector<std::vector<Expression>> fiber;
    for (std::size_t r = 0; r < md.fiber_map.size(); ++r) {
      std::vector<Expression> row;
      for (std::size_t c = 0; c < md.fiber_map[r].size(); ++c)
        row.push_back(b.base_expr(md.fiber_map[r][c], child(child("morphism.fiber_map", r), c)));
      fiber.push_back(std::move(row));
    }
    try {
      model.morphism.emplace(a, model.target->algebroid, std::move(base), std::move(fiber));
    } catch (const ModelError& e) {
      fail("morphism", e.what());
    }
  }
  return model;
}

Model load_model(const std::string& name_or_path, const VarBinding& overrides) {
  const fs::path path = resolve_model(name_or_path);
  const ModelSpec spec = read_model_spec(path);
  try {
    return build_model(spec, overrides);
  } catch (const ModelError& e) {
    throw ModelError(path.filename().string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Model

Expression Model::inline_definitions(const Expression& e) const {
  Builder b(spec, params);
  return b.base_expr(e, "expression");
}

ScalarFn Model::potential() const {
  if (!spec.potential) return {};
  return algebroid.compile_base(inline_definitions(*spec.potential));
}

MechanicalSystem Model::system() const { return MechanicalSystem(algebroid, potential()); }

ScalarFn Model::hamiltonian() const { return system().hamiltonian(); }

bool Model::has_section(const std::string& name) const {
  return std::any_of(spec.sections.begin(), spec.sections.end(), [&](const auto& d) { return d.name == name; });
}

std::vector<std::string> Model::section_names() const {
  std::vector<std::string> out;
  for (const auto& d : spec.sections) out.push_back(d.name);
  return out;
}

namespace {

const SectionDecl& find_section(const ModelSpec& spec, const std::string& name) {
  for (const auto& d : spec.sections)
    if (d.name == name) return d;
  throw ModelError(spec.name + ": no section named '" + name + "'");
}

}  // namespace

VarBinding Model::section_constants(const std::string& name, const VarBinding& constants) const {
  const SectionDecl& d = find_section(spec, name);
  VarBinding out = d.constants;
  for (const auto& [k, v] : constants.entries()) {
    if (!d.constants.contains(k)) throw ModelError("section '" + name + "' has no constant '" + k + "'");
    out.set(k, v);
  }
  return out;
}

Section1Form Model::section(const std::string& name, const VarBinding& constants) const {
  const SectionDecl& d = find_section(spec, name);
  Builder b(spec, params);
  std::vector<Expression> comps;
  for (const auto& c : d.components) comps.push_back(substitute(c, b.defs()));
  return Section1Form(algebroid, std::move(comps), section_constants(name, constants));
}

bool Model::has_function(const std::string& name) const {
  return std::any_of(spec.functions.begin(), spec.functions.end(), [&](const auto& f) { return f.first == name; });
}

ScalarFn Model::function(const std::string& name) const {
  for (const auto& [k, e] : spec.functions)
    if (k == name) return algebroid.compile_base(inline_definitions(e));
  throw ModelError(spec.name + ": no function named '" + name + "'");
}

ScalarFn Model::dual_function(std::string_view source) const {
  Expression e;
  try {
    e = parse(source);
  } catch (const ParseError& err) {
    throw ModelError(std::string("function on D*: ") + err.what());
  }
  Builder b(spec, params);
  auto allowed = b.base_names();
  for (int a = 1; a <= algebroid.rank(); ++a) allowed.insert("p" + std::to_string(a));
  check_variables(e, allowed, "function on D*");
  return algebroid.compile_dual(substitute(e, b.defs()));
}

SnakeboardParams Model::snakeboard_params() const {
  SnakeboardParams p;
  auto get = [&](const char* k, double& out) {
    const double* v = params.find(k);
    if (!v) throw ModelError(spec.name + ": missing parameter '" + k + "'");
    out = *v;
  };
  get("m", p.m);
  get("r", p.r);
  get("J0", p.j0);
  get("J1", p.j1);
  return p;
}

// ---------------------------------------------------------------------------
// Search path

std::vector<fs::path> model_search_path() {
  std::vector<fs::path> out;
  if (const char* env = std::getenv("ALGEBROID_MODEL_PATH")) {
    std::string_view rest(env);
    while (!rest.empty()) {
      const auto colon = rest.find(':');
      const auto piece = rest.substr(0, colon);
      if (!piece.empty()) out.emplace_back(piece);
      if (colon == std::string_view::npos) break;
      rest.remove_prefix(colon + 1);
    }
  }
  if (const fs::path exe = executable_dir(); !exe.empty()) out.push_back(exe / "models");
  out.emplace_back(SKEWALG_MODEL_DIR);
  return out;
}

fs::path resolve_model(const std::string& name_or_path) {
  const fs::path direct(name_or_path);
  std::error_code ec;
  if (name_or_path.find('/') != std::string::npos || direct.extension() == ".json") {
    if (fs::is_regular_file(direct, ec)) return direct;
    if (name_or_path.find('/') != std::string::npos) throw ModelError("model file not found: " + name_or_path);
  }
  const std::string file = direct.extension() == ".json" ? name_or_path : name_or_path + ".json";
  for (const auto& dir : model_search_path()) {
    const fs::path candidate = dir / file;
    if (fs::is_regular_file(candidate, ec)) return candidate;
  }
  throw ModelError("model '" + name_or_path + "' not found on the search path");
}

std::vector<std::string> bundled_models() {
  std::set<std::string> names;
  std::error_code ec;
  for (const auto& dir : model_search_path()) {
    if (!fs::is_directory(dir, ec)) continue;
    for (const auto& entry : fs::directory_iterator(dir, ec))
      if (entry.is_regular_file() && entry.path().extension() == ".json") names.insert(entry.path().stem().string());
  }
  return {names.begin(), names.end()};
}

}  // namespace skewalg
