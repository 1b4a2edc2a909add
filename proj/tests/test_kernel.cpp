#include <catch_amalgamated.hpp>

#include <cmath>

#include "critlab/kernel.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace critlab;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

IndexedSubdomain everything(const WeightedDomain& d) {
  std::vector<int> all(d.size());
  for (int i = 0; i < d.size(); ++i) all[i] = i;
  return IndexedSubdomain(d, all);
}

}  // namespace

TEST_CASE("finite heat kernels in closed form", "[kernel]") {
  auto one = fixtures::single_vertex();
  const auto s1 = everything(*one);
  CHECK_THAT(heat_kernel_finite(assemble(one, Potential::constant(1, 1.0)), s1, 0, 0, 1.0),
             WithinRel(std::exp(-1.0), 1e-15));
  for (double c : {0.0, 0.3, 4.0})
    for (double t : {0.1, 2.0, 10.0})
      CHECK_THAT(heat_kernel_finite(assemble(one, Potential::constant(1, c)), s1, 0, 0, t),
                 WithinRel(oracle::single_vertex_kernel(c, t), 1e-14));
  // measure 2: k = e^{-ct} / mu
  auto heavy = fixtures::single_vertex(2.0);
  CHECK_THAT(heat_kernel_finite(assemble(heavy, Potential::constant(1, 0.5)), everything(*heavy), 0, 0, 3.0),
             WithinRel(0.5 * std::exp(-1.5), 1e-14));

  auto two = fixtures::two_vertex();
  auto P = assemble(two);
  for (double t : {0.0, 0.2, 1.0, 8.0}) {
    const auto H = heat_matrix_finite(P, everything(*two), t);
    CHECK_THAT(H(0, 0), WithinRel(oracle::two_vertex_diagonal(t), 1e-13));
    CHECK_THAT(H(0, 1), WithinAbs(0.5 * (1.0 - std::exp(-2.0 * t)), 1e-14));
    CHECK(H(0, 1) == H(1, 0));
  }

  auto lat = make_fixture("lat1", 10);
  const auto mid = restrict(*lat.domain, {0});
  CHECK_THAT(heat_kernel_finite(assemble(lat.domain), mid, 0, 0, 1.0), WithinRel(std::exp(-2.0), 1e-15));
}

TEST_CASE("heat kernel at t = 0 and argument checks", "[kernel]") {
  auto f = build_radial(3, 10, 1.0);
  auto P = assemble(f.domain);
  const auto s = everything(*f.domain);
  CHECK(heat_kernel_finite(P, s, 3, 3, 0.0) == 1.0 / 9.0);
  CHECK(heat_kernel_finite(P, s, 3, 4, 0.0) == 0.0);
  const auto sub = restrict(*f.domain, {1, 2});
  CHECK_THROWS_AS(heat_kernel_finite(P, sub, 1, 5, 1.0), ValidationError);
  HeatKernelEvaluator ev(P, f.exhaustion);
  CHECK_THROWS_AS(ev.heat_kernel(1, 1, -1.0), ValidationError);
}

TEST_CASE("heat matrix routes agree", "[kernel]") {
  auto g = make_fixture("lat1_geo(0.5)");
  auto P = assemble(g.domain);
  const auto& s = g.exhaustion.level(2);
  for (double t : {0.5, 20.0}) {
    const Eigen::MatrixXd a = detail::transition(P, s, t, detail::Route::Extended);
    const Eigen::MatrixXd b = detail::transition(P, s, t, detail::Route::Spectral);
    CHECK(((a - b).array().abs() <= 1e-9 * a.array().abs() + 1e-300).all());
  }
  // stochastic rows of exp(-tK) when D = 0 and the set is closed
  auto two = fixtures::two_vertex();
  const Eigen::MatrixXd T = detail::transition(assemble(two), everything(*two), 3.0, detail::Route::Uniformized);
  CHECK_THAT(T.row(0).sum(), WithinAbs(1.0, 1e-15));
}

TEST_CASE("lattice heat kernel matches the Bessel series", "[kernel]") {
  auto f = make_fixture("lat1");
  HeatKernelEvaluator ev(assemble(f.domain), f.exhaustion);
  for (double t : {0.5, 1.0, 5.0, 20.0}) {
    auto r = ev.heat_kernel(0, 0, t);
    REQUIRE(r.converged());
    CHECK_THAT(r.value, WithinRel(oracle::lattice_heat_diagonal(t), 1e-8));
  }
}

TEST_CASE("constant killing multiplies the kernel by exp(-ct)", "[kernel]") {
  auto f = make_fixture("lat1");
  HeatKernelEvaluator ev(assemble(f.domain, Potential::constant(f.domain->size(), 1.0)), f.exhaustion);
  for (double t : {1.0, 10.0}) {
    auto r = ev.heat_kernel(0, 0, t);
    REQUIRE(r.converged());
    CHECK_THAT(r.value, WithinRel(std::exp(-t) * oracle::lattice_heat_diagonal(t), 1e-8));
  }
}

TEST_CASE("closed domains converge at their only level", "[kernel]") {
  auto one = fixtures::single_vertex();
  HeatKernelEvaluator ev(assemble(one, Potential::constant(1, 2.0)), closed_exhaustion(*one, 0));
  auto r = ev.heat_kernel(0, 0, 1.5);
  CHECK(r.converged());
  CHECK(r.levels.size() == 1);
  CHECK_THAT(r.value, WithinRel(std::exp(-3.0), 1e-14));
  auto g = ev.green(0, 0);
  CHECK(g.converged());
  CHECK_THAT(g.value, WithinRel(0.5, 1e-15));
}

TEST_CASE("finite Green functions", "[kernel]") {
  auto one = fixtures::single_vertex();
  CHECK_THAT(green_finite(assemble(one, Potential::constant(1, 4.0)), everything(*one), 0, 0),
             WithinRel(0.25, 1e-15));
  // Dirichlet path of n vertices: G(1, 1) = n / (n + 1)
  auto lat = make_fixture("lat1", 20);
  auto P = assemble(lat.domain);
  for (int r : {0, 1, 4}) {
    std::vector<Vertex> labels;
    for (int i = -r; i <= r; ++i) labels.push_back(i);
    const double n = 2 * r + 1;
    CHECK_THAT(green_finite(P, restrict(*lat.domain, labels), -r, -r), WithinRel(n / (n + 1), 1e-14));
    CHECK_THAT(green_finite(P, restrict(*lat.domain, labels), 0, 0), WithinRel((r + 1.0) / 2.0, 1e-14));
  }
  // a closed operator without killing has no Green function
  auto two = fixtures::two_vertex();
  CHECK_THROWS_AS(green_finite(assemble(two), everything(*two), 0, 0), NumericalError);
}

TEST_CASE("Green function exhaustion limits", "[kernel]") {
  SECTION("lattice with killing") {
    auto f = make_fixture("lat1");
    HeatKernelEvaluator ev(assemble(f.domain, Potential::constant(f.domain->size(), 1.0)), f.exhaustion);
    auto r = ev.green(0, 0);
    REQUIRE(r.converged());
    CHECK_THAT(r.value, WithinRel(1.0 / std::sqrt(5.0), 1e-8));
    CHECK_THAT(r.value, WithinRel(oracle::lattice_killed_green(1.0), 1e-8));
  }
  SECTION("recurrent lattice diverges") {
    auto f = make_fixture("lat1");
    HeatKernelEvaluator ev(assemble(f.domain), f.exhaustion);
    CHECK(ev.green(0, 0).diverging());
  }
  SECTION("transient radial fixture converges") {
    auto f = make_fixture("rad(3)");
    HeatKernelEvaluator ev(assemble(f.domain), f.exhaustion);
    auto r = ev.green(1, 1);
    REQUIRE(r.converged());
    CHECK_THAT(r.value, WithinRel(oracle::radial3_green_origin(), 1e-6));
  }
  SECTION("recurrent radial fixture diverges") {
    auto f = make_fixture("rad(2)");
    HeatKernelEvaluator ev(assemble(f.domain), f.exhaustion);
    CHECK(ev.green(1, 1).diverging());
  }
}
