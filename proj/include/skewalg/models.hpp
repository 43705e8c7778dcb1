#pragma once

// Model files: JSON documents whose leaves are expression strings. A model
// is either given directly (anchor and structure expressions in a frame) or
// as a frame of a parent algebroid, optionally split into a constraint
// block D and its orthogonal complement.

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "skewalg/algebroid.hpp"
#include "skewalg/dynamics.hpp"
#include "skewalg/morphism.hpp"

namespace skewalg {

/// Sparse components keyed by coordinate or basis name, in file order.
using Components = std::vector<std::pair<std::string, Expression>>;

struct LabeledComponents {
  std::string label;
  Components components;
};

/// [[left, right]] = sum of result entries.
struct StructureDecl {
  std::string left, right;
  Components result;
};

struct MetricEntry {
  std::string a, b;
  Expression value;
};

struct DomainDecl {
  std::vector<std::pair<std::string, std::pair<double, double>>> box;
  std::vector<std::pair<Expression, double>> exclude;
};

struct SectionDecl {
  std::string name;
  VarBinding constants;  // family constants with default values
  std::vector<Expression> components;
};

/// Inline parent algebroid for frame models; absent means the tangent
/// bundle of the coordinate chart, whose basis names are the coordinates.
struct ParentDecl {
  std::vector<std::string> labels;
  std::vector<LabeledComponents> anchor;
  std::vector<StructureDecl> structure;
};

struct FrameDecl {
  std::optional<ParentDecl> parent;
  std::vector<MetricEntry> metric;  // symmetric, unlisted entries are zero
  std::vector<LabeledComponents> vectors;
  int split = 0;  // 0: keep the whole frame
};

struct MorphismDecl {
  std::string target;
  std::vector<Expression> base_map;
  std::vector<std::vector<Expression>> fiber_map;
};

struct ModelSpec {
  std::string name;
  std::string source;
  VarBinding parameters;
  std::vector<std::pair<std::string, Expression>> definitions;
  std::vector<std::string> coordinates;
  std::vector<std::string> labels;
  std::vector<LabeledComponents> anchor;
  std::vector<StructureDecl> structure;
  std::optional<FrameDecl> frame;
  bool lie_algebroid = false;
  DomainDecl domain;
  std::optional<Expression> potential;
  std::vector<SectionDecl> sections;
  std::vector<std::pair<std::string, Expression>> functions;
  std::optional<MorphismDecl> morphism;
  std::string closed_form;
};

/// Schema violations and expression errors become ModelError with the JSON
/// location of the offending field.
ModelSpec parse_model_spec(std::string_view json_text);
ModelSpec read_model_spec(const std::filesystem::path& path);
std::string serialize_model_spec(const ModelSpec& spec);

/// Same fields and structurally equal expression trees.
bool same_model_spec(const ModelSpec& a, const ModelSpec& b);

struct Model;

/// Validated model. Overrides must name declared parameters.
Model build_model(const ModelSpec& spec, const VarBinding& overrides = {});

/// Accepts a file path or a bare bundled name.
Model load_model(const std::string& name_or_path, const VarBinding& overrides = {});

struct Model {
  ModelSpec spec;
  VarBinding params;  // defaults with overrides applied
  SkewAlgebroid algebroid;
  std::shared_ptr<const Model> target;  // morphism target, when present
  std::optional<BundleMorphism> morphism;

  /// Definitions substituted until only coordinates, parameters and free
  /// names remain.
  Expression inline_definitions(const Expression& e) const;

  ScalarFn potential() const;  // empty when the model has none
  MechanicalSystem system() const;
  ScalarFn hamiltonian() const;

  bool has_section(const std::string& name) const;
  std::vector<std::string> section_names() const;
  /// Default family constants overridden by `constants`.
  VarBinding section_constants(const std::string& name, const VarBinding& constants = {}) const;
  Section1Form section(const std::string& name, const VarBinding& constants = {}) const;

  bool has_function(const std::string& name) const;
  ScalarFn function(const std::string& name) const;

  /// Parses a function on D* over coordinates, p1..pn and parameters.
  ScalarFn dual_function(std::string_view source) const;

  /// Snakeboard constants read from parameters m, r, J0, J1.
  SnakeboardParams snakeboard_params() const;
};

/// Directories searched for bare names: entries of ALGEBROID_MODEL_PATH,
/// then models/ next to the executable, then the source tree's models/.
std::vector<std::filesystem::path> model_search_path();
std::filesystem::path resolve_model(const std::string& name_or_path);

/// Bare names of every model file on the search path, sorted, deduplicated.
std::vector<std::string> bundled_models();

}  // namespace skewalg
