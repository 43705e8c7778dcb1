#include <doctest.h>

#include <cmath>

#include "skewalg/algebroid.hpp"
#include "skewalg/models.hpp"
#include "skewalg/poisson.hpp"
#include "support.hpp"

using namespace skewalg;
using skewalg::test::vec;

namespace {

double max_entry(const FormValue& v) { return v.max_abs(); }

// Independent commutator of two explicit plane fields applied to f, all by
// central differences written out here.
double commutator_applied(const VectorFn& x1, const VectorFn& x2, const ScalarFn& f, const Vec& q) {
  const double h = 1e-5;
  auto directional = [&](const VectorFn& v, const ScalarFn& g, const Vec& at) {
    const Vec dir = v(at);
    return (g(at + h * dir) - g(at - h * dir)) / (2 * h);
  };
  const ScalarFn x2f = [&](const Vec& y) { return directional(x2, f, y); };
  const ScalarFn x1f = [&](const Vec& y) { return directional(x1, f, y); };
  return directional(x1, x2f, q) - directional(x2, x1f, q);
}

}  // namespace

TEST_CASE("d_function examples") {
  SUBCASE("standard TR^2, f = xy at (2,3)") {
    const SkewAlgebroid a = standard_tangent({"x", "y"});
    const Vec d = d_function(a, [](const Vec& q) { return q(0) * q(1); }, vec({2, 3}));
    CHECK(d(0) == doctest::Approx(3.0).epsilon(1e-9));
    CHECK(d(1) == doctest::Approx(2.0).epsilon(1e-9));
  }
  SUBCASE("plane counterexample, f = x at (1,1)") {
    const Model m = load_model("r2_counterexample");
    const Vec d = d_function(m.algebroid, m.function("x"), vec({1, 1}));
    CHECK(d(0) == doctest::Approx(1.0));
    CHECK(std::abs(d(1)) < 1e-12);
  }
  SUBCASE("carriage leaf function is annihilated") {
    const Model m = load_model("carriage");
    for (const Vec& q : test::base_points(m.algebroid, 50, 3))
      CHECK(d_function(m.algebroid, m.function("leaf"), q).lpNorm<Eigen::Infinity>() < 1e-8);
  }
}

TEST_CASE("d_function obeys Leibniz on every bundled model") {
  for (const auto& name : test::all_models()) {
    CAPTURE(name);
    const Model m = load_model(name);
    const auto& a = m.algebroid;
    const Vec w1 = vec({0.3, -0.7, 1.1, 0.2, -0.4}).head(a.base_dim());
    const Vec w2 = vec({-0.5, 0.9, 0.1, 0.6, 0.8}).head(a.base_dim());
    const ScalarFn f = [&](const Vec& q) { return std::sin(w1.dot(q)); };
    const ScalarFn g = [&](const Vec& q) { return std::exp(0.3 * w2.dot(q)); };
    const ScalarFn fg = [&](const Vec& q) { return f(q) * g(q); };
    for (const Vec& q : test::base_points(a, 10, 11)) {
      const Vec lhs = d_function(a, fg, q);
      const Vec rhs = f(q) * d_function(a, g, q) + g(q) * d_function(a, f, q);
      CHECK((lhs - rhs).lpNorm<Eigen::Infinity>() < 1e-6);
    }
  }
}

TEST_CASE("d_oneform on cocycle sections") {
  SUBCASE("carriage constants") {
    const Model m = load_model("carriage");
    const Section1Form alpha = m.section("constant", {{"K1", 0.7}, {"K2", -1.3}});
    for (const Vec& q : test::base_points(m.algebroid, 100, 5))
      CHECK(max_abs(d_oneform(m.algebroid, alpha.function(), q)) < 1e-8);
  }
  SUBCASE("snakeboard family at 100 points") {
    const Model m = load_model("snakeboard_reduced");
    const Section1Form alpha = m.section("paper_family");
    for (const Vec& q : test::base_points(m.algebroid, 100, 6))
      CHECK(max_abs(d_oneform(m.algebroid, alpha.function(), q)) < 1e-8);
  }
  SUBCASE("zero section") {
    for (const auto& name : test::all_models()) {
      const Model m = load_model(name);
      const VectorFn zero = [n = m.algebroid.rank()](const Vec&) { return Vec(Vec::Zero(n)); };
      for (const Vec& q : test::base_points(m.algebroid, 5, 7))
        CHECK(max_abs(d_oneform(m.algebroid, zero, q)) == 0.0);
    }
  }
  SUBCASE("output is antisymmetric") {
    for (const auto& name : test::all_models()) {
      const Model m = load_model(name);
      const int n = m.algebroid.rank();
      const VectorFn alpha = [n](const Vec& q) {
        Vec v(n);
        for (int i = 0; i < n; ++i) v(i) = std::sin((i + 1) * q.sum()) + 0.1 * i;
        return v;
      };
      for (const Vec& q : test::base_points(m.algebroid, 20, 8)) {
        const Mat d = d_oneform(m.algebroid, alpha, q);
        CHECK(max_abs(d + d.transpose()) == 0.0);
      }
    }
  }
}

TEST_CASE("d_kform agrees with the low-degree operators") {
  for (const auto& name : test::all_models()) {
    CAPTURE(name);
    const Model m = load_model(name);
    const auto& a = m.algebroid;
    const int n = a.rank();
    const ScalarFn f = [](const Vec& q) { return std::cos(q.sum()) + q(0) * q(0); };
    const VectorFn alpha = [n](const Vec& q) {
      Vec v(n);
      for (int i = 0; i < n; ++i) v(i) = std::sin((i + 1) * q(0) + 0.3 * q.sum()) - 0.2 * i;
      return v;
    };
    for (const Vec& q : test::base_points(a, 20, 9)) {
      const FormValue d0 = d_kform(a, KForm::from_function(n, f), q);
      const Vec df = d_function(a, f, q);
      for (int g = 0; g < n; ++g) CHECK(std::abs(d0.at({g}) - df(g)) < 1e-9);

      const FormValue d1 = d_kform(a, KForm::from_section(n, alpha), q);
      const Mat da = d_oneform(a, alpha, q);
      for (int g = 0; g < n; ++g)
        for (int v = 0; v < n; ++v) CHECK(std::abs(d1.at({g, v}) - da(g, v)) < 1e-9);
    }
  }
}

TEST_CASE("d_kform Leibniz rule for f times a 1-form") {
  for (const auto& name : {"snakeboard_reduced", "carriage", "beanie_full"}) {
    CAPTURE(name);
    const Model m = load_model(name);
    const auto& a = m.algebroid;
    const int n = a.rank();
    const ScalarFn f = [](const Vec& q) { return std::sin(q(0)) + 0.5 * q(q.size() - 1); };
    const VectorFn w = [n](const Vec& q) {
      Vec v(n);
      for (int i = 0; i < n; ++i) v(i) = std::cos((i + 1) * q(0)) + 0.1 * i * q(q.size() - 1);
      return v;
    };
    const VectorFn fw = [&](const Vec& q) { return Vec(f(q) * w(q)); };
    for (const Vec& q : test::base_points(a, 10, 12)) {
      const FormValue lhs = d_kform(a, KForm::from_section(n, fw), q);
      const Vec df = d_function(a, f, q);
      const Vec wq = w(q);
      const FormValue dw = d_kform(a, KForm::from_section(n, w), q);
      for (int g = 0; g < n; ++g)
        for (int v = 0; v < n; ++v) {
          const double wedge = df(g) * wq(v) - df(v) * wq(g);
          CHECK(std::abs(lhs.at({g, v}) - (wedge + f(q) * dw.at({g, v}))) < 1e-6);
        }
    }
  }
}

TEST_CASE("d_kform squares to zero on a Lie algebroid 1-form") {
  const Model m = load_model("beanie_full");
  const int n = m.algebroid.rank();
  const KForm w = KForm::from_section(n, [n](const Vec& q) {
    Vec v(n);
    for (int i = 0; i < n; ++i) v(i) = std::sin(q(3) + i) * std::cos(q(2));
    return v;
  });
  const KForm dw(n, 2, [&](const Vec& q) { return d_kform(m.algebroid, w, q, {1e-4, Stencil::Central4}); });
  for (const Vec& q : test::base_points(m.algebroid, 5, 13))
    CHECK(max_entry(d_kform(m.algebroid, dw, q, {1e-4, Stencil::Central4})) < 1e-6);
}

TEST_CASE("d_kform rejects degree overflow") {
  const SkewAlgebroid a = standard_tangent({"x", "y"});
  const KForm top(2, 2, [](const Vec&) { return FormValue(2, 2); });
  CHECK_THROWS_AS(d_kform(a, top, vec({0, 0})), PreconditionError);
}

TEST_CASE("curvature_of_function") {
  SUBCASE("vanishes on Lie algebroids") {
    for (const auto& name : {"standard_tq_r2", "beanie_reduced", "beanie_full", "carriage_ambient"}) {
      CAPTURE(name);
      const Model m = load_model(name);
      const ScalarFn f = [](const Vec& q) { return std::sin(q.sum()) + q(0) * q(q.size() - 1); };
      for (const Vec& q : test::base_points(m.algebroid, 10, 14))
        CHECK(max_abs(curvature_of_function(m.algebroid, f, q)) < 1e-6);
    }
  }
  SUBCASE("constant function") {
    for (const auto& name : test::all_models()) {
      const Model m = load_model(name);
      const ScalarFn one = [](const Vec&) { return 1.0; };
      for (const Vec& q : test::base_points(m.algebroid, 3, 15))
        CHECK(max_abs(curvature_of_function(m.algebroid, one, q)) == 0.0);
    }
  }
  SUBCASE("carriage matches the commutator of its printed fields") {
    const Model m = load_model("carriage");
    const double mm = 2, J = 0.5, C = 0.1, a = 0.3, r = 0.5;
    const double l1 = std::sqrt(4 * C * r * r + a * a * J + a * a * mm * r * r);
    const double l2 = std::sqrt((a * a * J + 2 * C * r * r) * (2 * C + mm * a * a) * (a * a * J + 4 * C * r * r + a * a * r * r * mm));
    const double u = a * (a * a * J + 2 * C * r * r);
    const VectorFn x1 = [=](const Vec& q) {
      return vec({-a * r * std::cos(q(2)) / l1, -a * r * std::sin(q(2)) / l1, -a / l1, 2 * r / l1, 0.0});
    };
    const VectorFn x2 = [=](const Vec& q) {
      return vec({-u * std::cos(q(2)) / l2, -u * std::sin(q(2)) / l2, a * r * (2 * C + mm * a * a) / l2,
                  a * a * (J - mm * r * r) / l2, (a * a * J + 4 * C * r * r + a * a * mm * r * r) / l2});
    };
    const Vec q = vec({0.2, -0.4, 0.0, 0.7, -1.1});
    const Vec q2 = vec({0.2, -0.4, 0.6, 0.7, -1.1});
    for (const char* fname : {"y", "theta"}) {
      CAPTURE(fname);
      const ScalarFn f = m.function(fname);
      for (const Vec& at : {q, q2}) {
        const double expected = commutator_applied(x1, x2, f, at);
        CHECK(curvature_of_function(m.algebroid, f, at)(0, 1) == doctest::Approx(expected).epsilon(1e-6).scale(1e-6));
      }
    }
    // theta has constant components along X1 and X2, so its curvature is zero.
    CHECK(std::abs(curvature_of_function(m.algebroid, m.function("theta"), q)(0, 1)) < 1e-8);
    CHECK(std::abs(curvature_of_function(m.algebroid, m.function("y"), q)(0, 1)) > 1e-3);
  }
  SUBCASE("snakeboard is not flat") {
    const Model m = load_model("snakeboard_reduced");
    double worst = 0.0;
    for (const Vec& q : test::base_points(m.algebroid, 20, 16))
      worst = std::max(worst, max_abs(curvature_of_function(m.algebroid, m.function("psi"), q)));
    CHECK(worst > 1e-3);
  }
  SUBCASE("two routes agree") {
    for (const auto& name : test::all_models()) {
      CAPTURE(name);
      const Model m = load_model(name);
      const ScalarFn f = [](const Vec& q) { return std::cos(q(0)) * (1 + q(q.size() - 1)); };
      for (const Vec& q : test::base_points(m.algebroid, 5, 17)) {
        const Mat c1 = curvature_of_function(m.algebroid, f, q);
        const Mat c2 = curvature_by_bracket_defect(m.algebroid, f, q);
        CHECK(max_abs(c1 - c2) < 1e-5);
        CHECK(max_abs(c1 + c1.transpose()) < 1e-12);
      }
    }
  }
}

TEST_CASE("extract_structure round trip") {
  for (const auto& name : test::all_models()) {
    CAPTURE(name);
    const Model m = load_model(name);
    const auto& a = m.algebroid;
    const int n = a.rank();
    for (const Vec& q : test::base_points(a, 5, 18)) {
      const ExtractedStructure e = extract_structure(bracket_evaluator(a), a.base_dim(), n, q);
      CHECK(max_abs(e.anchor - a.anchor(q)) < 1e-8);
      const StructureTensor c = a.structure(q);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          for (int g = 0; g < n; ++g) {
            CHECK(std::abs(e.structure(i, j, g) - c(i, j, g)) < 1e-8);
            CHECK(e.structure(i, j, g) == -e.structure(j, i, g));
          }
    }
  }
}

TEST_CASE("extract_structure rejects a nonlinear bracket") {
  const BracketEvaluator bad = [](const ScalarFn& f, const ScalarFn& g, const Vec& x) {
    return f(x) * g(x) * x.squaredNorm();
  };
  CHECK_THROWS_AS(extract_structure(bad, 1, 2, vec({0.3})), ConsistencyError);
}

TEST_CASE("structure functions at documented parameter points") {
  SUBCASE("snakeboard, J1 = 1/4, phi = 0") {
    const Model m = load_model("snakeboard_reduced", {{"J1", 0.25}});
    const double m_ = 1, r = 1, j0 = 0.5, j1 = 0.25, phi = 0.0;
    const double f = j0 - j0 * j0 * std::sin(phi) * std::sin(phi) / (m_ * r * r);
    const double oracle = -j0 * std::cos(phi) / (r * std::sqrt(2 * j1 * m_ * f));
    const auto e = extract_structure(bracket_evaluator(m.algebroid), 2, 3, vec({0, 0}));
    CHECK(std::abs(e.structure(0, 1, 2) - oracle) < 1e-12);
    CHECK(std::abs(e.structure(0, 1, 2) + 1.0) < 1e-12);
    CHECK(std::abs(e.structure(0, 2, 1) - 1.0) < 1e-12);
  }
  SUBCASE("beanie, I1 = I2 = 1") {
    const Model m = load_model("beanie_reduced", {{"I1", 1.0}, {"I2", 1.0}});
    const auto e = extract_structure(bracket_evaluator(m.algebroid), 1, 4, vec({0.4}));
    CHECK(std::abs(e.structure(0, 1, 2) - (-0.7071067811865475)) < 1e-12);
  }
}

TEST_CASE("restrict_constrained") {
  SUBCASE("coordinate plane inside TR^3") {
    const SkewAlgebroid d = restrict_constrained(standard_tangent({"x", "y", "z"}), 2);
    const Vec q = vec({0.1, 0.2, 0.3});
    CHECK(d.rank() == 2);
    CHECK(max_abs(d.anchor(q) - Mat::Identity(3, 3).leftCols(2)) == 0.0);
    CHECK(d.structure(q).max_abs() == 0.0);
  }
  SUBCASE("carriage constraint bracket vanishes") {
    const Model m = load_model("carriage");
    for (const Vec& q : test::base_points(m.algebroid, 20, 19)) CHECK(m.algebroid.structure(q).max_abs() < 1e-8);
    const Model amb = load_model("carriage_ambient");
    double leak = 0.0;
    for (const Vec& q : test::base_points(amb.algebroid, 20, 19)) {
      const StructureTensor c = amb.algebroid.structure(q);
      for (int g = 2; g < 5; ++g) leak = std::max(leak, std::abs(c(0, 1, g)));
    }
    CHECK(leak > 1e-3);  // the ambient bracket leaves D, only its projection vanishes
  }
  SUBCASE("snakeboard from its Atiyah frame") {
    const Model full = load_model("snakeboard_atiyah");
    const Model red = load_model("snakeboard_reduced");
    for (const Vec& q : test::base_points(red.algebroid, 20, 20)) {
      CHECK(max_abs(full.algebroid.anchor(q) - red.algebroid.anchor(q)) < 1e-9);
      const StructureTensor a = full.algebroid.structure(q), b = red.algebroid.structure(q);
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
          for (int g = 0; g < 3; ++g) CHECK(std::abs(a(i, j, g) - b(i, j, g)) < 1e-9);
    }
  }
  SUBCASE("split out of range") {
    CHECK_THROWS(restrict_constrained(standard_tangent({"x", "y"}), 3));
    CHECK_THROWS(restrict_constrained(standard_tangent({"x", "y"}), 0));
  }
}

TEST_CASE("framed_algebroid reproduces a rotating frame") {
  // X1 = cos t dx + sin t dy, X2 = -sin t dx + cos t dy, X3 = dt on R^2 x S^1.
  const SkewAlgebroid parent = standard_tangent({"x", "y", "t"});
  const SkewAlgebroid a = framed_algebroid(
      parent, {"X1", "X2", "X3"},
      {{parse("cos(t)"), parse("sin(t)"), parse("0")},
       {parse("-sin(t)"), parse("cos(t)"), parse("0")},
       {parse("0"), parse("0"), parse("1")}});
  const StructureTensor c = a.structure(vec({0.3, -0.2, 0.9}));
  // [X3, X1] = X2 and [X3, X2] = -X1.
  CHECK(c(2, 0, 1) == doctest::Approx(1.0));
  CHECK(c(2, 1, 0) == doctest::Approx(-1.0));
  CHECK(std::abs(c(0, 1, 0)) + std::abs(c(0, 1, 1)) + std::abs(c(0, 1, 2)) < 1e-12);
}
