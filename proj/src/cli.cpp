#include "skewalg/cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>

#include <CLI11.hpp>

#include "skewalg/dynamics.hpp"
#include "skewalg/models.hpp"
#include "skewalg/morphism.hpp"
#include "skewalg/nonholonomy.hpp"
#include "skewalg/poisson.hpp"

namespace skewalg::cli {

namespace {

using Assignments = std::vector<std::pair<std::string, double>>;

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  const auto e = s.find_last_not_of(" \t");
  return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

// "a=1, b=pi/4" with constant expressions on the right.
Assignments parse_assignments(const std::string& text, const char* what) {
  Assignments out;
  if (trim(text).empty()) return out;
  for (const auto& item : split(text, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw ModelError(std::string(what) + ": expected name=value, got '" + item + "'");
    const std::string name = trim(item.substr(0, eq));
    for (const auto& [k, v] : out)
      if (k == name) throw ModelError(std::string(what) + ": '" + name + "' given twice");
    try {
      out.emplace_back(name, eval(parse(item.substr(eq + 1)), {}));
    } catch (const ParseError& e) {
      throw ModelError(std::string(what) + ": " + name + ": " + e.what());
    } catch (const EvalError& e) {
      throw ModelError(std::string(what) + ": " + name + ": " + e.what());
    }
  }
  return out;
}

VarBinding to_binding(const Assignments& as) {
  VarBinding b;
  for (const auto& [k, v] : as) b.set(k, v);
  return b;
}

// Every coordinate must be given; fiber entries p<k> or v<k> default to 0.
Vec state_from(const SkewAlgebroid& a, const Assignments& as, bool with_fiber, const char* what) {
  const int m = a.base_dim(), n = a.rank();
  Vec x = Vec::Zero(with_fiber ? m + n : m);
  std::vector<bool> seen(m, false);
  for (const auto& [k, v] : as) {
    const auto& c = a.coords();
    const auto it = std::find(c.begin(), c.end(), k);
    if (it != c.end()) {
      const auto i = static_cast<int>(it - c.begin());
      x(i) = v;
      seen[i] = true;
      continue;
    }
    if (with_fiber && k.size() > 1 && (k[0] == 'p' || k[0] == 'v')) {
      int idx = 0;
      try {
        idx = std::stoi(k.substr(1));
      } catch (const std::exception&) {
        idx = 0;
      }
      if (idx >= 1 && idx <= n && std::to_string(idx) == k.substr(1)) {
        x(m + idx - 1) = v;
        continue;
      }
    }
    throw ModelError(std::string(what) + ": unknown name '" + k + "'");
  }
  for (int i = 0; i < m; ++i)
    if (!seen[i]) throw ModelError(std::string(what) + ": missing coordinate '" + a.coords()[i] + "'");
  if (!a.in_domain(x.head(m))) throw ModelError(std::string(what) + ": point lies outside the chart domain");
  return x;
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

struct Common {
  std::string model;
  std::string params;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--model", c.model, "model file or bundled name")->required();
  sub->add_option("--param", c.params, "parameter overrides, k=v[,k=v...]");
}

Model load(const Common& c) { return load_model(c.model, to_binding(parse_assignments(c.params, "--param"))); }

// Output goes to --out when given, otherwise to the command's stdout.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) : stream_(&fallback) {
    if (path.empty()) return;
    file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
    if (!*file_) throw ModelError("cannot open output file " + path);
    stream_ = file_.get();
  }
  std::ostream& operator*() { return *stream_; }
  bool to_file() const { return file_ != nullptr; }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* stream_;
};

// ---------------------------------------------------------------------------

struct SimulateOpts {
  Common common;
  std::string flow = "hamilton";
  std::string x0;
  std::string h;
  double t = 5.0;
  double dt = 1e-3;
  std::string out;
  std::optional<double> tol;
};

int cmd_simulate(const SimulateOpts& o, std::ostream& out, std::ostream& err) {
  const Model model = load(o.common);
  const SkewAlgebroid& a = model.algebroid;
  const Vec x0 = state_from(a, parse_assignments(o.x0, "--x0"), true, "--x0");
  Trajectory tr;
  double drift = 0.0;
  if (o.flow == "hamilton") {
    const ScalarFn h = o.h.empty() ? model.hamiltonian() : model.dual_function(o.h);
    tr = hamilton_flow(a, h, x0, o.t, o.dt);
    drift = max_drift(tr, h);
  } else {
    if (!o.h.empty()) throw ModelError("--h applies to the hamilton flow only");
    if (o.flow == "lagrange" && !a.lie_algebroid())
      throw ModelError("the lagrange flow needs a Lie algebroid model; use --flow nonholonomic");
    const MechanicalSystem sys = model.system();
    tr = o.flow == "lagrange" ? geodesic_el_flow(sys, x0, o.t, o.dt) : nonholonomic_flow(sys, x0, o.t, o.dt);
    drift = max_drift(tr, [&sys](const Vec& x) { return sys.energy(x); });
  }
  Sink sink(o.out, out);
  tr.write_csv(*sink);
  std::ostream& summary = sink.to_file() ? out : err;
  summary << "flow " << o.flow << "  steps " << tr.t.size() - 1 << "  energy drift " << sci(drift) << '\n';
  if (o.tol && drift > *o.tol) {
    summary << "energy drift exceeds tolerance " << sci(*o.tol) << '\n';
    return kExitTolerance;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct CheckOpts {
  Common common;
  std::string section;
  std::string constants;
  std::vector<std::string> perturb;
  double tol = 1e-6;
  int samples = 100;
  std::uint64_t seed = 1;
  double t = 5.0;
  double dt = 1e-3;
  std::string q0;
};

// "alpha3*=1.1" scales component 3 of the section.
VectorFn perturbed(VectorFn alpha, const std::vector<std::string>& specs, int rank) {
  std::vector<double> factor(rank, 1.0);
  for (const auto& spec : specs)
    for (const auto& item : split(spec, ',')) {
      const auto op = item.find("*=");
      const std::string name = trim(item.substr(0, op));
      if (op == std::string::npos || name.rfind("alpha", 0) != 0)
        throw ModelError("--perturb: expected alpha<k>*=<factor>, got '" + item + "'");
      int k = 0;
      try {
        k = std::stoi(name.substr(5));
      } catch (const std::exception&) {
        k = 0;
      }
      if (k < 1 || k > rank) throw ModelError("--perturb: no component '" + name + "'");
      try {
        factor[k - 1] *= eval(parse(item.substr(op + 2)), {});
      } catch (const Error& e) {
        throw ModelError(std::string("--perturb: ") + e.what());
      }
    }
  return [alpha = std::move(alpha), factor](const Vec& q) {
    Vec v = alpha(q);
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) *= factor[static_cast<std::size_t>(i)];
    return v;
  };
}

int cmd_check(const CheckOpts& o, std::ostream& out) {
  const Model model = load(o.common);
  const SkewAlgebroid& a = model.algebroid;
  const Section1Form section = model.section(o.section, to_binding(parse_assignments(o.constants, "--const")));
  const VectorFn alpha = perturbed(section.function(), o.perturb, a.rank());
  const ScalarFn h = model.hamiltonian();

  Rng rng(o.seed);
  double cocycle = 0.0, hj = 0.0;
  for (int k = 0; k < o.samples; ++k) {
    const Vec q = a.sample_point(rng);
    cocycle = std::max(cocycle, max_abs(d_oneform(a, alpha, q)));
    hj = std::max(hj, hj_residual(a, h, alpha, q).lpNorm<Eigen::Infinity>());
  }
  const Vec q0 = o.q0.empty() ? a.sample_point(rng) : Vec(state_from(a, parse_assignments(o.q0, "--q0"), false, "--q0"));
  const HarnessReport harness = lift_harness(a, h, alpha, q0, o.t, o.dt);

  out << "model " << model.spec.name << "  section " << o.section << "  samples " << o.samples << '\n';
  out << "max cocycle residual   " << sci(cocycle) << '\n';
  out << "max HJ residual        " << sci(hj) << '\n';
  out << "harness lift defect    " << sci(harness.max_lift_defect) << "  (t in [0, " << o.t << "], dt " << o.dt << ")\n";
  out << "harness HJ residual    " << sci(harness.max_hj_residual) << '\n';
  const bool pass = cocycle <= o.tol && hj <= o.tol && harness.max_lift_defect <= o.tol;
  out << (pass ? "PASS" : "FAIL") << " at tolerance " << sci(o.tol) << '\n';
  return pass ? kExitOk : kExitTolerance;
}

// ---------------------------------------------------------------------------

struct AnalyzeOpts {
  Common common;
  int samples = 20;
  std::uint64_t seed = 1;
  std::string points;
  int max_depth = 0;
  std::string csv;
};

int cmd_analyze(const AnalyzeOpts& o, std::ostream& out) {
  const Model model = load(o.common);
  const SkewAlgebroid& a = model.algebroid;
  std::vector<Vec> points;
  if (!o.points.empty()) {
    for (const auto& p : split(o.points, ';'))
      if (!p.empty()) points.push_back(state_from(a, parse_assignments(p, "--points"), false, "--points"));
  } else {
    Rng rng(o.seed);
    for (int k = 0; k < o.samples; ++k) points.push_back(a.sample_point(rng));
  }
  const NonholonomyReport report = verdict(a, points, o.max_depth);
  report.write_table(out, a.coords());
  if (!o.csv.empty()) {
    Sink sink(o.csv, out);
    report.write_csv(*sink, a.coords());
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct MorphismOpts {
  Common common;
  int grid = 30;
  std::uint64_t seed = 1;
  double tol = 1e-6;
  bool identity = false;
  int scale_row = 0;
  double scale_factor = 2.0;
  std::string section;
  std::string constants;
};

int cmd_morphism(const MorphismOpts& o, std::ostream& out) {
  const Model model = load(o.common);
  const Model* target = &model;
  std::optional<BundleMorphism> morphism;
  if (o.identity) {
    morphism = BundleMorphism::identity(model.algebroid);
  } else {
    if (!model.morphism) throw ModelError(model.spec.name + " has no morphism block; use --identity");
    morphism = *model.morphism;
    target = model.target.get();
  }
  if (o.scale_row != 0) morphism = morphism->with_scaled_row(o.scale_row - 1, o.scale_factor);

  const SkewAlgebroid& src = model.algebroid;
  Rng rng(o.seed);
  std::vector<Vec> grid, dual_grid;
  for (int k = 0; k < o.grid; ++k) {
    const Vec q = src.sample_point(rng);
    Vec x(src.base_dim() + src.rank());
    x << q, rng.uniform_vec(src.rank(), -1.0, 1.0);
    grid.push_back(q);
    dual_grid.push_back(x);
  }
  const ScalarFn h = model.hamiltonian();
  const ScalarFn hbar = target->hamiltonian();

  const LapReport lap = check_lap_morphism(*morphism, grid);
  out << "morphism " << model.spec.name << " -> " << target->spec.name << "  grid " << o.grid << '\n';
  out << "bracket defect         " << sci(lap.max_bracket_defect) << '\n';
  out << "anchor defect          " << sci(lap.max_anchor_defect) << '\n';
  bool pass = lap.max_bracket_defect <= o.tol && lap.max_anchor_defect <= o.tol;
  if (!pass) {
    out << "hamiltonian defect     skipped (not a linear almost Poisson morphism)\n";
  } else {
    const double hd = check_hamiltonian_morphism(*morphism, h, hbar, dual_grid, o.tol);
    out << "hamiltonian defect     " << sci(hd) << '\n';
    pass = hd <= o.tol;
  }

  std::string section = o.section;
  if (section.empty() && !target->spec.sections.empty()) section = target->spec.sections.front().name;
  if (!section.empty()) {
    const Section1Form alpha_bar = target->section(section, to_binding(parse_assignments(o.constants, "--const")));
    try {
      const TransferResult tr = transfer_hj(*morphism, alpha_bar.function(), h, hbar, grid);
      const auto& r = tr.report;
      out << "transfer of section " << section << '\n';
      out << "  round trip           " << sci(r.max_round_trip) << '\n';
      out << "  target cocycle       " << sci(r.max_target_cocycle) << '\n';
      out << "  source cocycle       " << sci(r.max_source_cocycle) << '\n';
      out << "  target HJ residual   " << sci(r.max_target_hj) << '\n';
      out << "  source HJ residual   " << sci(r.max_source_hj) << '\n';
      out << "  relatedness defect   " << sci(r.max_relatedness_defect) << '\n';
      out << "  h(alpha) spread      " << sci(r.hamiltonian_spread) << '\n';
      pass = pass && r.max_round_trip <= o.tol;
    } catch (const PreconditionError& e) {
      out << "transfer of section " << section << " not possible: " << e.what() << '\n';
      pass = false;
    }
  }
  out << (pass ? "PASS" : "FAIL") << " at tolerance " << sci(o.tol) << '\n';
  return pass ? kExitOk : kExitTolerance;
}

// ---------------------------------------------------------------------------

struct TableOpts {
  Common common;
  std::string at;
};

int cmd_bracket_table(const TableOpts& o, std::ostream& out) {
  const Model model = load(o.common);
  const SkewAlgebroid& a = model.algebroid;
  const Vec x = state_from(a, parse_assignments(o.at, "--at"), true, "--at");
  const auto names = a.dual_names();
  const auto br = bracket_evaluator(a);
  const int dim = static_cast<int>(names.size());
  char buf[32];
  out << "{row, col}";
  for (const auto& nm : names) out << ',' << nm;
  out << '\n';
  for (int i = 0; i < dim; ++i) {
    out << names[i];
    for (int j = 0; j < dim; ++j) {
      const double v = br([i](const Vec& y) { return y(i); }, [j](const Vec& y) { return y(j); }, x);
      std::snprintf(buf, sizeof buf, "%.10g", std::abs(v) < 1e-12 ? 0.0 : v);
      out << ',' << buf;
    }
    out << '\n';
  }
  return kExitOk;
}

int cmd_models(std::ostream& out) {
  for (const auto& name : bundled_models()) {
    std::string source;
    try {
      source = read_model_spec(resolve_model(name)).source;
    } catch (const ModelError& e) {
      source = std::string("(unreadable: ") + e.what() + ")";
    }
    out << name << "  " << source << '\n';
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Skew-symmetric algebroids: Hamilton-Jacobi checks, nonholonomy analysis and simulation"};
  app.name("skewalg");
  app.set_help_flag("--help", "print this help and exit");
  app.require_subcommand(1);

  SimulateOpts sim;
  auto* s = app.add_subcommand("simulate", "integrate a flow and write a trajectory CSV");
  add_common(s, sim.common);
  s->add_option("--flow", sim.flow, "hamilton | lagrange | nonholonomic")
      ->check(CLI::IsMember({"hamilton", "lagrange", "nonholonomic"}));
  s->add_option("--x0", sim.x0, "initial state, e.g. phi=0.3,psi=0,v1=1")->required();
  s->add_option("--h", sim.h, "Hamiltonian over coordinates and p1..pn (hamilton flow)");
  s->add_option("--t", sim.t, "final time")->check(CLI::NonNegativeNumber);
  s->add_option("--dt", sim.dt, "time step")->check(CLI::PositiveNumber);
  s->add_option("--out", sim.out, "CSV output path (default stdout)");
  s->add_option("--tol", sim.tol, "fail when the energy drift exceeds this");

  CheckOpts chk;
  auto* c = app.add_subcommand("check", "cocycle, Hamilton-Jacobi residual and lift harness for a section");
  add_common(c, chk.common);
  c->add_option("--section", chk.section, "section name in the model")->required();
  c->add_option("--const", chk.constants, "family constants, k=v[,k=v...]");
  c->add_option("--perturb", chk.perturb, "scale a component, alpha<k>*=<factor>");
  c->add_option("--tol", chk.tol, "pass threshold")->check(CLI::PositiveNumber);
  c->add_option("--samples", chk.samples, "random sample points")->check(CLI::PositiveNumber);
  c->add_option("--seed", chk.seed, "sampling seed");
  c->add_option("--t", chk.t, "harness final time")->check(CLI::NonNegativeNumber);
  c->add_option("--dt", chk.dt, "harness time step")->check(CLI::PositiveNumber);
  c->add_option("--q0", chk.q0, "harness start point (default: a random sample)");

  AnalyzeOpts an;
  auto* n = app.add_subcommand("analyze", "iterated bracket rank and complete nonholonomy verdict");
  add_common(n, an.common);
  n->add_option("--samples", an.samples, "random sample points")->check(CLI::PositiveNumber);
  n->add_option("--seed", an.seed, "sampling seed");
  n->add_option("--points", an.points, "explicit points, x=1,y=0[;x=..]");
  n->add_option("--max-depth", an.max_depth, "bracket depth cap (0 means 2m)")->check(CLI::NonNegativeNumber);
  n->add_option("--csv", an.csv, "also write the rank table as CSV");

  MorphismOpts mo;
  auto* mcmd = app.add_subcommand("morphism", "morphism conditions and Hamilton-Jacobi transfer");
  add_common(mcmd, mo.common);
  mcmd->add_option("--grid", mo.grid, "random source points")->check(CLI::PositiveNumber);
  mcmd->add_option("--seed", mo.seed, "sampling seed");
  mcmd->add_option("--tol", mo.tol, "pass threshold")->check(CLI::PositiveNumber);
  mcmd->add_flag("--identity", mo.identity, "use the identity morphism of the model");
  mcmd->add_option("--scale-row", mo.scale_row, "multiply fiber row k (1-based) by --scale-factor")
      ->check(CLI::PositiveNumber);
  mcmd->add_option("--scale-factor", mo.scale_factor, "factor for --scale-row");
  mcmd->add_option("--section", mo.section, "target section to transfer (default: the first)");
  mcmd->add_option("--const", mo.constants, "constants of the target section");

  TableOpts tb;
  auto* t = app.add_subcommand("bracket-table", "brackets of coordinate functions on D* at a point");
  add_common(t, tb.common);
  t->add_option("--at", tb.at, "point, coordinates plus optional p1..pn")->required();

  auto* lst = app.add_subcommand("models", "list model files on the search path");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (s->parsed()) return cmd_simulate(sim, out, err);
    if (c->parsed()) return cmd_check(chk, out);
    if (n->parsed()) return cmd_analyze(an, out);
    if (mcmd->parsed()) return cmd_morphism(mo, out);
    if (t->parsed()) return cmd_bracket_table(tb, out);
    if (lst->parsed()) return cmd_models(out);
  } catch (const ModelError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const PreconditionError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const IntegrationError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  }
  return kExitInput;
}

}  // namespace skewalg::cli
