#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "critlab/domain.hpp"

using namespace critlab;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("lattice with unit measure", "[domain]") {
  auto f = build_lattice_1d(2, MeasureRule::unit(), 1.0);
  const auto& d = *f.domain;
  REQUIRE(d.size() == 5);
  for (int i = 0; i < d.size(); ++i) CHECK(d.measure(i) == 1.0);
  const auto edges = d.edge_list();
  CHECK(edges.size() == 8);
  for (const auto& e : edges) CHECK(e.weight == 1.0);
  CHECK(d.symmetric());
  CHECK(d.label(f.exhaustion.root()) == 0);
}

TEST_CASE("lattice with geometric measure", "[domain]") {
  auto f = build_lattice_1d(2, MeasureRule::geometric(0.5), 1.0);
  const auto& d = *f.domain;
  const double expect[] = {0.25, 0.5, 1.0, 0.5, 0.25};
  for (int i = 0; i < 5; ++i) CHECK(d.measure(i) == expect[i]);
  CHECK(d.total_measure() == 2.5);
}

TEST_CASE("geometric total measure approaches 3", "[domain]") {
  auto f = build_lattice_1d(60, MeasureRule::geometric(0.5), 1.0);
  double partial = 1.0;
  for (int k = 1; k <= 60; ++k) partial += 2.0 * std::ldexp(1.0, -k);
  CHECK_THAT(f.domain->total_measure(), WithinRel(partial, 1e-15));
  CHECK_THAT(f.domain->total_measure(), WithinAbs(3.0, 1e-17 + 4.0 * std::ldexp(1.0, -60)));
  auto big = make_fixture("lat1_geo(0.5)");
  CHECK_THAT(big.domain->total_measure(), WithinAbs(3.0, 1e-14));
}

TEST_CASE("lattice exhaustion doubles and stays inside the ambient path", "[domain]") {
  auto f = build_lattice_1d(100, MeasureRule::unit(), 1.0);
  const auto& e = f.exhaustion;
  REQUIRE(e.level_count() >= 2);
  int r = 1;
  for (int j = 0; j < e.level_count(); ++j, r = 2 * r + 1) {
    CHECK(e.level(j).size() == 2 * r + 1);
    CHECK(!e.level(j).is_full());
    if (j + 1 < e.level_count())
      for (int v : e.level(j).members()) CHECK(e.level(j + 1).contains(v));
  }
  auto lin = build_lattice_1d(6, MeasureRule::unit(), 1.0, Growth::Linear);
  CHECK(lin.exhaustion.level_count() == 5);
  CHECK(lin.exhaustion.level(4).size() == 11);
}

TEST_CASE("lattice builder rejects bad arguments", "[domain]") {
  CHECK_THROWS_AS(build_lattice_1d(1, MeasureRule::unit(), 1.0), ValidationError);
  CHECK_THROWS_AS(build_lattice_1d(5, MeasureRule::geometric(1.5), 1.0), ValidationError);
  CHECK_THROWS_AS(build_lattice_1d(5, MeasureRule::unit(), 0.0), ValidationError);
}

TEST_CASE("radial fixture weights", "[domain]") {
  auto f = build_radial(3, 10, 1.0);
  const auto& d = *f.domain;
  REQUIRE(d.size() == 10);
  for (int i = 1; i <= 10; ++i) CHECK(d.measure(d.index_of(i)) == double(i * i));
  for (int i = 1; i < 10; ++i) {
    const double w = (i + 0.5) * (i + 0.5);
    CHECK(d.weight(d.index_of(i), d.index_of(i + 1)) == w);
    CHECK(d.weight(d.index_of(i + 1), d.index_of(i)) == w);
  }
  CHECK(d.out_weight(d.index_of(1)) == 2.25);  // no edge towards the origin
  CHECK(f.exhaustion.level(0).size() == 2);
  CHECK(f.exhaustion.level(1).size() == 4);
  CHECK(f.exhaustion.level(2).size() == 8);
}

TEST_CASE("radial builder with linear growth and bad arguments", "[domain]") {
  auto f = build_radial(2, 101, 0.5, Growth::Linear, 4);
  REQUIRE(f.exhaustion.level_count() == 4);
  CHECK(f.exhaustion.level(0).size() == 25);
  CHECK(f.exhaustion.level(3).size() == 100);
  CHECK_THAT(f.domain->measure(0), WithinRel(0.25, 1e-15));  // r = 0.5, mu = r h
  CHECK_THROWS_AS(build_radial(1, 100, 1.0), ValidationError);
  CHECK_THROWS_AS(build_radial(3, 100, 0.0), ValidationError);
  CHECK_THROWS_AS(build_radial(3, 9, 1.0), ValidationError);
}

TEST_CASE("restriction to subsets of a path", "[domain]") {
  auto f = build_lattice_1d(2, MeasureRule::unit(), 1.0);
  const auto& d = *f.domain;
  auto mid = restrict(d, {0});
  CHECK(mid.size() == 1);
  CHECK(mid.ambient(0) == d.index_of(0));
  auto three = restrict(d, {-1, 0, 1});
  CHECK(three.size() == 3);
  CHECK(three.local(d.index_of(2)) == -1);
  CHECK(!three.contains(d.index_of(-2)));
  auto all = restrict(d, {-2, -1, 0, 1, 2});
  CHECK(all.is_full());
  for (int i = 0; i < d.size(); ++i) CHECK(all.local(i) == i);
  CHECK_THROWS_AS(restrict(d, {-2, 2}), ValidationError);   // disconnected
  CHECK_THROWS_AS(restrict(d, {0, 7}), ValidationError);    // unknown vertex
  CHECK_THROWS_AS(restrict(d, {}), ValidationError);
}

TEST_CASE("domain validation", "[domain]") {
  using E = std::vector<WeightedEdge>;
  CHECK_THROWS_AS(WeightedDomain({0, 1}, {1.0, -1.0}, E{{0, 1, 1.0}, {1, 0, 1.0}}), ValidationError);
  CHECK_THROWS_AS(WeightedDomain({0, 1}, {1.0, 1.0}, E{{0, 1, -1.0}}), ValidationError);
  CHECK_THROWS_AS(WeightedDomain({0, 0}, {1.0, 1.0}, E{}), ValidationError);
  CHECK_THROWS_AS(WeightedDomain({0, 1}, {1.0, 1.0}, E{{0, 5, 1.0}}), ValidationError);
  WeightedDomain asym({0, 1}, {1.0, 2.0}, E{{0, 1, 1.0}});
  CHECK(!asym.symmetric());
  CHECK(asym.transposed().weight(1, 0) == 1.0);
  CHECK(asym.transposed().weight(0, 1) == 0.0);
}

TEST_CASE("exhaustion invariants", "[domain]") {
  auto f = build_lattice_1d(10, MeasureRule::unit(), 1.0);
  const auto& d = *f.domain;
  CHECK_THROWS_AS(Exhaustion(d, {{9, 10, 11}, {10}}, 10), ValidationError);          // shrinking
  CHECK_THROWS_AS(Exhaustion(d, {{9, 10, 11}, {10, 11, 12, 13}}, 10), ValidationError);  // not nested
  CHECK_THROWS_AS(Exhaustion(d, {{9, 10, 11}}, 3), ValidationError);                  // root outside S_1
  CHECK_THROWS_AS(Exhaustion(d, {}, 10), ValidationError);
  auto closed = closed_exhaustion(d, 10);
  CHECK(closed.closed());
  CHECK(closed.level(0).is_full());
}

TEST_CASE("fixture names", "[domain]") {
  CHECK(make_fixture("lat1").domain->size() == 4001);
  CHECK(make_fixture("lat1", 50).domain->size() == 101);
  CHECK(make_fixture("lat1_geo(0.5)").domain->size() == 2 * 963 + 1);
  CHECK(make_fixture("rad(3)").domain->size() == 1000);
  CHECK_THROWS_AS(make_fixture("lat2"), ValidationError);
  CHECK_THROWS_AS(make_fixture("lat1_geo(2)"), ValidationError);
  CHECK_THROWS_AS(make_fixture("lat1_geo(x)"), ValidationError);
  CHECK_THROWS_AS(make_fixture("rad(2.5)"), ValidationError);
}

TEST_CASE("domain files", "[domain]") {
  const auto path = std::filesystem::temp_directory_path() / "critlab_test_domain.txt";
  {
    std::ofstream out(path);
    out << "# triangle with a tail\n0 1\n1 2\n2 1\n3 0.5\n";
    out << "0 1 1\n1 0 1\n1 2 1\n2 1 1\n0 2 1\n2 0 1\n2 3 2\n3 2 2\n";
  }
  auto f = make_fixture("file:" + path.string());
  CHECK(f.domain->size() == 4);
  CHECK(f.domain->measure(f.domain->index_of(1)) == 2.0);
  CHECK(f.domain->weight(f.domain->index_of(2), f.domain->index_of(3)) == 2.0);
  CHECK(f.exhaustion.closed());
  CHECK(f.exhaustion.level(f.exhaustion.level_count() - 1).is_full());
  {
    std::ofstream out(path);
    out << "0 1\n1 1\n0 1 1 7\n";
  }
  try {
    make_fixture("file:" + path.string());
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find(":3:") != std::string::npos);
  }
  std::filesystem::remove(path);
  CHECK_THROWS_AS(make_fixture("file:/nonexistent/domain.txt"), ValidationError);
}
