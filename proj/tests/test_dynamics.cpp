#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "skewalg/dynamics.hpp"
#include "skewalg/models.hpp"
#include "skewalg/poisson.hpp"
#include "support.hpp"

using namespace skewalg;
using skewalg::test::vec;

namespace {

Vec join(const Vec& q, const Vec& p) {
  Vec x(q.size() + p.size());
  x << q, p;
  return x;
}

// Snakeboard reference quantities written out from the printed formulas.
struct Snake {
  double m = 1, r = 1, j0 = 0.5, j1 = 0.1875;
  double f(double phi) const { return j0 - j0 * j0 * std::sin(phi) * std::sin(phi) / (m * r * r); }
  double k(double phi) const { return j0 * std::cos(phi) / (r * std::sqrt(2 * j1 * m * f(phi))); }
};

}  // namespace

TEST_CASE("rk4_integrate") {
  SUBCASE("exponential decay") {
    const Trajectory tr = rk4_integrate([](double, const Vec& x) { return Vec(-x); }, vec({1}), 0, 1, 1e-3);
    CHECK(tr.t.back() == 1.0);
    CHECK(std::abs(tr.x.back()(0) - std::exp(-1.0)) < 1e-10);
  }
  SUBCASE("zero field") {
    const Trajectory tr = rk4_integrate([](double, const Vec& x) { return Vec(Vec::Zero(x.size())); }, vec({2, -3}), 0, 1, 0.1);
    for (const Vec& x : tr.x) CHECK((x - vec({2, -3})).norm() == 0.0);
  }
  SUBCASE("short final step lands on the end time") {
    const Trajectory tr = rk4_integrate([](double, const Vec& x) { return Vec(-x); }, vec({1}), 0, 1, 0.3);
    CHECK(tr.t.size() == 5);
    CHECK(tr.t.back() == 1.0);
    for (std::size_t i = 1; i < tr.t.size(); ++i) CHECK(tr.t[i] > tr.t[i - 1]);
  }
  SUBCASE("NaN reports its time") {
    const Rhs rhs = [](double t, const Vec& x) {
      return t >= 0.5 ? Vec(Vec::Constant(1, std::numeric_limits<double>::quiet_NaN())) : Vec(-x);
    };
    try {
      rk4_integrate(rhs, vec({1}), 0, 1, 1e-3);
      FAIL("expected IntegrationError");
    } catch (const IntegrationError& e) {
      CHECK(e.time() == doctest::Approx(0.5).epsilon(2e-3));
    }
  }
  SUBCASE("bad step") {
    CHECK_THROWS_AS(rk4_integrate([](double, const Vec& x) { return x; }, vec({1}), 0, 1, 0.0), PreconditionError);
  }
}

TEST_CASE("trajectory CSV") {
  Trajectory tr;
  tr.m = 1;
  tr.n = 1;
  tr.layout = StateLayout::Velocity;
  tr.t = {0.0, 0.1};
  tr.x = {vec({1.0 / 3.0, 2}), vec({0.5, -1})};
  std::ostringstream os;
  tr.write_csv(os);
  const std::string s = os.str();
  CHECK(s.rfind("t,q1,v1\n", 0) == 0);
  CHECK(s.find("0.33333333333333331") != std::string::npos);
}

TEST_CASE("hamilton_flow") {
  SUBCASE("free particle moves in straight lines") {
    const SkewAlgebroid a = standard_tangent({"x", "y"});
    const ScalarFn h = [](const Vec& x) { return 0.5 * (x(2) * x(2) + x(3) * x(3)); };
    const Trajectory tr = hamilton_flow(a, h, vec({0, 0, 1, 2}), 2, 1e-2);
    for (std::size_t i = 0; i < tr.t.size(); ++i) {
      CHECK(std::abs(tr.x[i](0) - tr.t[i]) < 1e-9);
      CHECK(std::abs(tr.x[i](1) - 2 * tr.t[i]) < 1e-9);
      CHECK(std::abs(tr.x[i](2) - 1) < 1e-12);
    }
  }
  SUBCASE("snakeboard energy drift") {
    const Model m = load_model("snakeboard_reduced");
    const ScalarFn h = m.hamiltonian();
    const Trajectory tr = hamilton_flow(m.algebroid, h, vec({0.3, 0, 1, 1, 1}), 5, 1e-3);
    CHECK(max_drift(tr, h) <= 1e-8);
  }
  SUBCASE("beanie without potential follows the reduced equations") {
    const Model m = load_model("beanie_reduced", {{"eps", 0.0}});
    const double i1 = 1, i2 = 0.5;
    const double s = std::sqrt(i2 / (i1 * (i1 + i2))), w = 1 / std::sqrt(i1 + i2);
    const double rho = std::sqrt((i1 + i2) / (i1 * i2));
    const auto reduced = [&](const Vec& x) {
      return vec({rho * x(1), 0.0, -(s * x(1) * x(3) - w * x(4) * x(3)), -(-s * x(1) * x(2) + w * x(4) * x(2)), 0.0});
    };
    const Trajectory tr = hamilton_flow(m.algebroid, m.hamiltonian(), vec({0.2, 0.8, -0.3, 0.5, 1.1}), 2, 1e-3);
    for (std::size_t i = 0; i < tr.x.size(); i += 200)
      CHECK((hamiltonian_vf(m.algebroid, m.hamiltonian(), tr.x[i]) - reduced(tr.x[i])).lpNorm<Eigen::Infinity>() < 1e-8);
    const Trajectory el = geodesic_el_flow(m.system(), tr.x.front(), 2, 1e-3);
    CHECK((el.x.back() - tr.x.back()).lpNorm<Eigen::Infinity>() < 1e-8);
  }
}

TEST_CASE("geodesic_el_flow") {
  SUBCASE("beanie shape angle obeys the reduced second-order equation") {
    const Model m = load_model("beanie_reduced");
    const double i1 = 1, i2 = 0.5, eps = 0.1;
    const double dt = 1e-3;
    const Trajectory tr = geodesic_el_flow(m.system(), vec({0.4, 0.3, 0.2, -0.1, 0.5}), 3, dt);
    for (std::size_t i = 1; i + 1 < tr.x.size(); i += 97) {
      const double psi = tr.x[i](0);
      const double second = (tr.x[i + 1](0) - 2 * psi + tr.x[i - 1](0)) / (dt * dt);
      const double expected = -((i1 + i2) / (i1 * i2)) * eps * std::sin(psi);
      CHECK(std::abs(second - expected) < 1e-6);
    }
  }
  SUBCASE("uniform motion on TR^2") {
    const Model m = load_model("standard_tq_r2");
    const Trajectory tr = geodesic_el_flow(m.system(), vec({1, -1, 0.5, 0.25}), 1, 1e-2);
    CHECK((tr.x.back() - vec({1.5, -0.75, 0.5, 0.25})).lpNorm<Eigen::Infinity>() < 1e-12);
  }
  SUBCASE("quadratic term equals the Christoffel form") {
    for (const auto& name : test::all_models()) {
      CAPTURE(name);
      const Model m = load_model(name);
      Rng rng(41);
      for (const Vec& q : test::base_points(m.algebroid, 10, 42)) {
        const StructureTensor c = m.algebroid.structure(q);
        const Vec v = rng.uniform_vec(m.algebroid.rank(), -2, 2);
        CHECK((quadratic_term(c, v) - quadratic_term_christoffel(c, v)).lpNorm<Eigen::Infinity>() < 1e-9);
      }
    }
  }
}

TEST_CASE("nonholonomic_flow") {
  SUBCASE("snakeboard initial velocity field") {
    const Model m = load_model("snakeboard_reduced");
    const Snake s;
    const Vec x0 = vec({0.3, 0, 1, 1, 1});
    const double phi = 0.3, k = s.k(phi);
    const Vec printed = vec({1 / std::sqrt(2 * s.j1), 1 / std::sqrt(s.f(phi)), 0.0, -k, k});
    const Trajectory tr = nonholonomic_flow(m.system(), x0, 1e-3, 1e-3);
    const Vec rhs = m.system().rhs(x0);
    CHECK((rhs - printed).lpNorm<Eigen::Infinity>() < 1e-12);
    CHECK(((tr.x[1] - tr.x[0]) / 1e-3 - printed).lpNorm<Eigen::Infinity>() < 1e-2);
  }
  SUBCASE("energy is conserved on every model") {
    for (const auto& name : test::all_models()) {
      CAPTURE(name);
      const Model m = load_model(name);
      const MechanicalSystem sys = m.system();
      Rng rng(43);
      Vec x0(m.algebroid.base_dim() + m.algebroid.rank());
      x0 << test::base_points(m.algebroid, 1, 44)[0], rng.uniform_vec(m.algebroid.rank(), -0.5, 0.5);
      const Trajectory tr = nonholonomic_flow(sys, x0, 5, 1e-3);
      const double e0 = sys.energy(x0);
      CHECK(max_drift(tr, [&](const Vec& x) { return sys.energy(x); }) <= 1e-8 * (1 + std::abs(e0)));
    }
  }
  SUBCASE("carriage moves along K1 X1 + K2 X2") {
    const Model m = load_model("carriage");
    const double k1 = 0.7, k2 = -0.4;
    const Vec q0 = vec({0.1, 0.2, 0.3, 0.4, 0.5});
    const Trajectory tr = nonholonomic_flow(m.system(), join(q0, vec({k1, k2})), 2, 1e-3);
    const SkewAlgebroid& a = m.algebroid;
    const Trajectory ref = rk4_integrate([&](double, const Vec& q) { return Vec(a.anchor(q) * vec({k1, k2})); }, q0, 0, 2, 1e-3);
    for (std::size_t i = 0; i < tr.x.size(); ++i) {
      CHECK(std::abs(tr.x[i](5) - k1) < 1e-12);
      CHECK(std::abs(tr.x[i](6) - k2) < 1e-12);
    }
    CHECK((tr.x.back().head(5) - ref.x.back()).lpNorm<Eigen::Infinity>() < 1e-12);
  }
}

TEST_CASE("hj_residual") {
  SUBCASE("snakeboard family at 100 points with constant kinetic energy") {
    const Model m = load_model("snakeboard_reduced");
    const Section1Form alpha = m.section("paper_family");
    const double c0 = 1, c1 = 0.5, c2 = 0.2;
    // f + J0^2 sin^2(phi) / (m r^2) = J0, so the sum of squares is phi-free.
    const double energy = 0.5 * (2 * 0.1875 * c0 * c0 + 0.5 * (c1 * c1 + c2 * c2));
    for (const Vec& q : test::base_points(m.algebroid, 100, 45)) {
      CHECK(hj_residual(m.algebroid, m.hamiltonian(), alpha.function(), q).lpNorm<Eigen::Infinity>() <= 1e-7);
      CHECK(0.5 * alpha(q).squaredNorm() == doctest::Approx(energy).epsilon(1e-12));
    }
  }
  SUBCASE("beanie family") {
    const Model m = load_model("beanie_reduced");
    const Section1Form alpha = m.section("hj_family", {{"k1", 1.0}, {"k2", 0.3}});
    for (const Vec& q : test::base_points(m.algebroid, 100, 46))
      CHECK(hj_residual(m.algebroid, m.hamiltonian(), alpha.function(), q).lpNorm<Eigen::Infinity>() <= 1e-7);
  }
  SUBCASE("zero section under a pure kinetic Hamiltonian") {
    for (const auto& name : test::all_models()) {
      const Model m = load_model(name);
      const int n = m.algebroid.rank();
      const VectorFn zero = [n](const Vec&) { return Vec(Vec::Zero(n)); };
      const ScalarFn h = MechanicalSystem(m.algebroid).hamiltonian();
      for (const Vec& q : test::base_points(m.algebroid, 5, 47))
        CHECK(hj_residual(m.algebroid, h, zero, q).lpNorm<Eigen::Infinity>() < 1e-12);
    }
  }
}

TEST_CASE("projected_vf") {
  SUBCASE("snakeboard family, J1 = 1/4, C = (1, 0, 1), phi = 0") {
    const Model m = load_model("snakeboard_reduced", {{"J1", 0.25}});
    const Section1Form alpha = m.section("paper_family", {{"C0", 1.0}, {"C1", 0.0}, {"C2", 1.0}});
    const Vec v = projected_vf(m.algebroid, m.hamiltonian(), alpha.function(), vec({0, 0.4}));
    CHECK((v - vec({1, 0})).lpNorm<Eigen::Infinity>() < 1e-9);
  }
  SUBCASE("snakeboard family at generic points") {
    const Model m = load_model("snakeboard_reduced");
    const Snake s;
    const double c0 = 1, c1 = 0.5, c2 = 0.2;
    const Section1Form alpha = m.section("paper_family");
    for (const Vec& q : test::base_points(m.algebroid, 20, 48)) {
      const double phi = q(0);
      const Vec expected =
          vec({c0, c1 + s.j0 * c2 * std::sin(phi) / (s.r * std::sqrt(s.m * s.f(phi)))});
      CHECK((projected_vf(m.algebroid, m.hamiltonian(), alpha.function(), q) - expected).lpNorm<Eigen::Infinity>() < 1e-8);
    }
  }
  SUBCASE("free particle follows grad S") {
    const SkewAlgebroid a = standard_tangent({"x", "y"});
    const ScalarFn h = [](const Vec& x) { return 0.5 * (x(2) * x(2) + x(3) * x(3)); };
    const VectorFn ds = [](const Vec& q) { return vec({2 * q(0) * q(1), q(0) * q(0) + std::cos(q(1))}); };
    const Vec q = vec({0.7, -0.2});
    CHECK((projected_vf(a, h, ds, q) - ds(q)).lpNorm<Eigen::Infinity>() < 1e-8);
  }
  SUBCASE("pure potential") {
    const SkewAlgebroid a = standard_tangent({"x", "y"});
    const ScalarFn h = [](const Vec& x) { return std::sin(x(0)) + x(1) * x(1); };
    const VectorFn alpha = [](const Vec& q) { return vec({q(1), 1.0}); };
    CHECK(projected_vf(a, h, alpha, vec({0.3, 0.4})).norm() < 1e-12);
  }
}

TEST_CASE("lift_harness") {
  const Model m = load_model("snakeboard_reduced");
  const Section1Form alpha = m.section("paper_family");
  const Vec q0 = vec({0.3, 0.0});
  SUBCASE("true family lifts to Hamilton solutions") {
    const HarnessReport r = lift_harness(m.algebroid, m.hamiltonian(), alpha.function(), q0, 5, 1e-3);
    CHECK(r.max_lift_defect <= 1e-6);
    CHECK(r.max_hj_residual <= 1e-6);
    CHECK(r.cocycle_ok);
  }
  SUBCASE("scaled third component breaks both sides") {
    const VectorFn bad = [&](const Vec& q) {
      Vec v = alpha(q);
      v(2) *= 1.1;
      return v;
    };
    const HarnessReport r = lift_harness(m.algebroid, m.hamiltonian(), bad, q0, 5, 1e-3);
    CHECK(r.max_lift_defect > 1e-3);
    CHECK(r.max_hj_residual > 1e-3);
  }
  SUBCASE("constant Hamiltonian") {
    const ScalarFn h = [](const Vec&) { return 2.0; };
    const HarnessReport r = lift_harness(m.algebroid, h, alpha.function(), q0, 1, 1e-2);
    CHECK(r.max_lift_defect == 0.0);
    CHECK(r.max_hj_residual == 0.0);
  }
  SUBCASE("the two indicators agree over a perturbed family") {
    const double tol = 1e-4;
    for (int k = -5; k <= 5; ++k) {
      const double factor = 1.0 + 0.04 * k;
      CAPTURE(factor);
      const VectorFn sec = [&, factor](const Vec& q) {
        Vec v = alpha(q);
        v(2) *= factor;
        return v;
      };
      const HarnessReport r = lift_harness(m.algebroid, m.hamiltonian(), sec, q0, 5, 1e-3);
      CHECK((r.max_lift_defect > tol) == (r.max_hj_residual > tol));
    }
  }
}

TEST_CASE("closed_form_snakeboard") {
  const SnakeboardParams p;
  const Snake s;
  SUBCASE("initial values") {
    const std::array<double, 5> c{1, 0.5, 0.2, 0.3, 0.1};
    const auto st = closed_form_snakeboard(p, c, 0);
    const double expected_psi =
        c[4] - (c[2] / c[0]) * std::log(std::sqrt(2.0) * (std::sqrt(s.j0) * std::cos(c[3]) +
                                                           std::sqrt(s.m * s.r * s.r - s.j0 * std::sin(c[3]) * std::sin(c[3]))));
    CHECK(st.phi == c[3]);
    CHECK(st.psi == doctest::Approx(expected_psi).epsilon(1e-14));
  }
  SUBCASE("linear branch") {
    const std::array<double, 5> c{0, 0.5, 0.2, 0.3, 0.1};
    const double slope = c[1] + std::sqrt(s.j0) * c[2] * std::sin(c[3]) /
                                    std::sqrt(s.m * s.r * s.r - s.j0 * std::sin(c[3]) * std::sin(c[3]));
    for (double t : {0.0, 1.0, 2.5, 5.0}) {
      const auto st = closed_form_snakeboard(p, c, t);
      CHECK(std::abs(st.psi - (c[4] + slope * t)) < 1e-12);
      CHECK(st.phi == c[3]);
    }
  }
  SUBCASE("momenta match the section along the curve") {
    const Model m = load_model("snakeboard_reduced");
    const Section1Form alpha = m.section("paper_family");
    const std::array<double, 5> c{1, 0.5, 0.2, 0.3, 0};
    for (double t : {0.0, 0.7, 2.0}) {
      const auto st = closed_form_snakeboard(p, c, t);
      const Vec a = alpha(vec({st.phi, st.psi}));
      CHECK((a - vec({st.v1, st.v2, st.v3})).lpNorm<Eigen::Infinity>() < 1e-12);
    }
  }
  SUBCASE("derivative of psi matches the projected field") {
    const Model m = load_model("snakeboard_reduced");
    const Section1Form alpha = m.section("paper_family");
    const std::array<double, 5> c{1, 0.5, 0.2, 0.3, 0};
    const double h = 1e-5;
    for (double t = 0.1; t < 5; t += 0.37) {
      const double d = (closed_form_snakeboard(p, c, t + h).psi - closed_form_snakeboard(p, c, t - h).psi) / (2 * h);
      const auto st = closed_form_snakeboard(p, c, t);
      const Vec v = projected_vf(m.algebroid, m.hamiltonian(), alpha.function(), vec({st.phi, st.psi}));
      CHECK(std::abs(d - v(1)) < 1e-6);
    }
  }
  SUBCASE("guards bad parameters") {
    CHECK_THROWS(closed_form_snakeboard({1, 1, -0.5, 0.1}, {1, 0, 0, 0, 0}, 0));
  }
}

TEST_CASE("energy drift of Hamilton flows on every model") {
  for (const auto& name : test::all_models()) {
    CAPTURE(name);
    const Model m = load_model(name);
    const ScalarFn h = m.hamiltonian();
    const Vec x0 = test::dual_points(m.algebroid, 1, 49)[0] * 0.5;
    const Trajectory tr = hamilton_flow(m.algebroid, h, x0, 5, 1e-3);
    CHECK(max_drift(tr, h) <= 1e-8 * (1 + std::abs(h(x0))));
  }
}

TEST_CASE("RK4 order against the analytic snakeboard curve") {
  const Model m = load_model("snakeboard_reduced");
  const Section1Form alpha = m.section("paper_family");
  const std::array<double, 5> c{1, 0.5, 0.2, 0.3, 0};
  const auto start = closed_form_snakeboard(m.snakeboard_params(), c, 0);
  const auto exact = closed_form_snakeboard(m.snakeboard_params(), c, 5);
  const ScalarFn h = m.hamiltonian();
  const auto error = [&](double dt) {
    const Trajectory tr = rk4_integrate(
        [&](double, const Vec& q) { return projected_vf(m.algebroid, h, alpha.function(), q); },
        vec({start.phi, start.psi}), 0, 5, dt);
    return (tr.x.back() - vec({exact.phi, exact.psi})).lpNorm<Eigen::Infinity>();
  };
  const double coarse = error(0.2), fine = error(0.1);
  CHECK(coarse / fine >= 12.0);
}
