#include <catch_amalgamated.hpp>

#include <cmath>

#include "critlab/criticality.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace critlab;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("principal eigenvalue of finite sets", "[criticality]") {
  auto one = fixtures::single_vertex();
  for (double c : {0.0, 0.4, 3.0}) {
    auto r = lambda0(assemble(one, Potential::constant(1, c)), closed_exhaustion(*one, 0));
    CHECK_THAT(r.value, WithinAbs(c, 1e-14));
    CHECK(r.error == 0.0);
  }
  auto lat = make_fixture("lat1", 200);
  auto P = assemble(lat.domain);
  for (int j = 0; j < 5; ++j) {
    const auto& s = lat.exhaustion.level(j);
    auto pp = level_principal_pair(P, s);
    CHECK_THAT(pp.lambda, WithinRel(oracle::path_dirichlet_lambda0(s.size()), 1e-10));
  }
  // two vertices, closed: lambda0 = 0 with a constant ground state
  auto two = fixtures::two_vertex();
  CHECK_THAT(lambda0(assemble(two), closed_exhaustion(*two, 0)).value, WithinAbs(0.0, 1e-14));
}

TEST_CASE("lambda0 along an exhaustion", "[criticality]") {
  auto lat = make_fixture("lat1");
  auto r = lambda0(assemble(lat.domain), lat.exhaustion);
  CHECK(r.history.size() == static_cast<std::size_t>(lat.exhaustion.level_count()));
  for (std::size_t k = 1; k < r.history.size(); ++k) CHECK(r.history[k] <= r.history[k - 1]);
  CHECK_THAT(r.value, WithinAbs(0.0, 1e-6));
  auto shifted = lambda0(assemble(lat.domain, Potential::constant(lat.domain->size(), 1.0)), lat.exhaustion);
  CHECK_THAT(shifted.value, WithinAbs(1.0, 1e-6));
}

TEST_CASE("classification of the fixtures", "[criticality]") {
  SECTION("lat1 is null-critical") {
    auto f = make_fixture("lat1");
    auto rep = classify(assemble(f.domain), f.exhaustion);
    CHECK(rep.classification == Classification::NullCritical);
    CHECK(rep.green.diverging());
    CHECK(rep.mass.diverging());
    // finite-level ground state: normalized at the root and symmetric
    const auto& phi = rep.ground_state;
    CHECK(phi[f.exhaustion.root()] == 1.0);
    CHECK_THAT(phi[f.domain->index_of(3)], WithinRel(phi[f.domain->index_of(-3)], 1e-10));
    CHECK(phi[f.domain->index_of(3)] < 1.0);
  }
  SECTION("lat1_geo is positive-critical") {
    auto f = make_fixture("lat1_geo(0.5)");
    auto rep = classify(assemble(f.domain), f.exhaustion);
    CHECK(rep.classification == Classification::PositiveCritical);
    CHECK_THAT(rep.mass.value, WithinRel(3.0, 1e-6));  // phi = phi* = 1, total measure 3
  }
  SECTION("rad(3) and lat1+1 are subcritical") {
    auto r3 = make_fixture("rad(3)");
    CHECK(classify(assemble(r3.domain), r3.exhaustion).classification == Classification::Subcritical);
    auto f = make_fixture("lat1");
    auto rep = classify(assemble(f.domain, Potential::constant(f.domain->size(), 1.0)), f.exhaustion);
    CHECK(rep.classification == Classification::Subcritical);
    CHECK_THAT(rep.green.value, WithinRel(oracle::lattice_killed_green(1.0), 1e-7));
  }
  SECTION("rad(2) is critical") {
    auto r2 = make_fixture("rad(2)");
    CHECK(is_critical(classify(assemble(r2.domain), r2.exhaustion).classification));
  }
  SECTION("closed domains") {
    auto one = fixtures::single_vertex();
    CHECK(classify(assemble(one), closed_exhaustion(*one, 0)).classification == Classification::PositiveCritical);
    CHECK(classify(assemble(one, Potential::constant(1, 0.5)), closed_exhaustion(*one, 0)).classification ==
          Classification::Subcritical);
  }
  SECTION("negative lambda0 is rejected") {
    auto f = make_fixture("lat1", 100);
    auto P = assemble(f.domain, Potential::indicator(*f.domain, 0, -1.0));
    CHECK_THROWS_AS(classify(P, f.exhaustion), NegativeLambda0);
  }
  SECTION("the reference point must lie in S_1") {
    auto f = make_fixture("lat1", 100);
    CriticalityOptions o;
    o.x0 = f.domain->index_of(50);
    CHECK_THROWS_AS(classify(assemble(f.domain), f.exhaustion, o), ValidationError);
  }
}

TEST_CASE("lambda0 from the heat kernel decay", "[criticality]") {
  auto one = fixtures::single_vertex();
  HeatKernelEvaluator ev1(assemble(one, Potential::constant(1, 0.7)), closed_exhaustion(*one, 0));
  auto r1 = lambda0_log_estimate(ev1, 0, 0, {1.0, 2.0, 4.0, 8.0});
  for (double v : r1.value) CHECK_THAT(v, WithinAbs(0.7, 1e-12));
  CHECK_THAT(r1.limit, WithinAbs(0.7, 1e-10));

  auto f = make_fixture("lat1");
  const std::vector<double> grid{5.0, 10.0, 20.0, 40.0, 80.0};
  HeatKernelEvaluator ev(assemble(f.domain, Potential::constant(f.domain->size(), 1.0)), f.exhaustion);
  CHECK_THAT(lambda0_log_estimate(ev, 0, 0, grid).limit, WithinAbs(1.0, 0.05));
  HeatKernelEvaluator ev0(assemble(f.domain), f.exhaustion);
  CHECK_THAT(lambda0_log_estimate(ev0, 0, 0, grid).limit, WithinAbs(0.0, 0.05));
  CHECK_THROWS_AS(lambda0_log_estimate(ev0, 0, 0, {}), ValidationError);
  CHECK_THROWS_AS(lambda0_log_estimate(ev0, 0, 0, {2.0, 1.0}), ValidationError);
}

TEST_CASE("critical coupling", "[criticality]") {
  auto f = make_fixture("lat1");
  auto P = assemble(f.domain, Potential::constant(f.domain->size(), 1.0));
  auto r = critical_coupling(P, Potential::indicator(*f.domain, 0, -1.0), f.exhaustion, 0.0, 10.0);
  CHECK_THAT(r.alpha0, WithinRel(std::sqrt(5.0), 1e-4));
  CHECK(r.oracle_agrees);
  CHECK_THROWS_AS(critical_coupling(P, Potential::indicator(*f.domain, 0, -1.0), f.exhaustion, 0.0, 1.0),
                  NoSignChange);
  CHECK_THROWS_AS(critical_coupling(P, Potential::indicator(*f.domain, 0, 1.0), f.exhaustion, 0.0, 10.0),
                  ValidationError);
  CHECK_THROWS_AS(critical_coupling(P, Potential::indicator(*f.domain, 0, -1.0), f.exhaustion, 2.0, 1.0),
                  ValidationError);
}

TEST_CASE("perturbation integrals", "[criticality]") {
  auto f = make_fixture("rad(3)");
  auto P = assemble(f.domain);
  const int x0 = f.exhaustion.root();
  auto zero = perturbation_integrals(P, Potential::zero(f.domain->size()), f.exhaustion, x0,
                                     PerturbationKind::Semismall);
  for (double v : zero.values) CHECK(v == 0.0);
  CHECK(zero.decreasing_to_zero);
  // compact support: the exterior integrals vanish once S_j covers it
  auto bump = perturbation_integrals(P, Potential::indicator(*f.domain, 3, 1.0), f.exhaustion, x0,
                                     PerturbationKind::Small);
  CHECK(bump.values.front() > 0.0);
  CHECK(bump.values.back() == 0.0);
  CHECK(bump.decreasing_to_zero);
}

TEST_CASE("ground state against a Green function", "[criticality]") {
  // lat1 + 1_{0}: G(x, 0) = 1 for every x, and phi = 1 for lat1.
  auto f = make_fixture("lat1");
  HeatKernelEvaluator ev(assemble(f.domain, Potential::indicator(*f.domain, 0, 1.0)), f.exhaustion);
  const VertexFunction phi(f.domain->size(), 1.0);
  const auto& d = *f.domain;
  auto [lo, hi] = ground_state_green_comparison(ev, phi, d.index_of(0), {d.index_of(1), d.index_of(-2), d.index_of(3)});
  CHECK_THAT(lo, WithinAbs(1.0, 1e-4));
  CHECK_THAT(hi, WithinAbs(1.0, 1e-4));
  CHECK_THROWS_AS(ground_state_green_comparison(ev, phi, d.index_of(0), {}), ValidationError);
}

TEST_CASE("edge weight domination", "[criticality]") {
  auto f = make_fixture("lat1", 20);
  auto P = assemble(f.domain);
  const int n = f.domain->size();
  VertexFunction one(n, 1.0), two(n, std::sqrt(2.0)), neg(n, -1.0);
  auto r = edge_weight_domination(P, P, one, one);
  CHECK(r.ok);
  CHECK_THAT(r.C, WithinRel(1.0, 1e-15));
  CHECK_THAT(edge_weight_domination(P, P, two, one).C, WithinRel(2.0, 1e-15));
  CHECK(edge_weight_domination(P, P, neg, one).C == 0.0);  // only u1_+ counts
  VertexFunction hole = one;
  hole[f.domain->index_of(0)] = 0.0;
  auto bad = edge_weight_domination(P, P, one, hole);
  CHECK(!bad.ok);
  CHECK(!bad.reason.empty());
}
