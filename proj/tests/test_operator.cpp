#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "critlab/kernel.hpp"
#include "critlab/operator.hpp"
#include "fixtures.hpp"

using namespace critlab;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

IndexedSubdomain everything(const WeightedDomain& d) {
  std::vector<int> all(d.size());
  for (int i = 0; i < d.size(); ++i) all[i] = i;
  return IndexedSubdomain(d, all);
}

// mu = (1, 2), a single directed edge 0 -> 1 of weight 1.
DomainPtr one_way() {
  return std::make_shared<const WeightedDomain>(std::vector<Vertex>{0, 1}, std::vector<double>{1.0, 2.0},
                                                std::vector<WeightedEdge>{{0, 1, 1.0}});
}

}  // namespace

TEST_CASE("action matrices of tiny operators", "[operator]") {
  auto one = fixtures::single_vertex();
  const auto K1 = assemble(one, Potential::constant(1, 0.7)).action_matrix(everything(*one));
  REQUIRE(K1.rows() == 1);
  CHECK(K1(0, 0) == 0.7);

  auto two = fixtures::two_vertex();
  const auto K2 = assemble(two).action_matrix(everything(*two));
  CHECK(K2(0, 0) == 1.0);
  CHECK(K2(0, 1) == -1.0);
  CHECK(K2(1, 0) == -1.0);
  CHECK(K2(1, 1) == 1.0);

  auto lat = make_fixture("lat1", 10);
  const auto Kd = assemble(lat.domain).action_matrix(restrict(*lat.domain, {3}));
  REQUIRE(Kd.rows() == 1);
  CHECK(Kd(0, 0) == 2.0);  // both edges leave the subset: pure absorption
}

TEST_CASE("action matrix rows", "[operator]") {
  auto f = build_radial(3, 10, 1.0);
  auto P = assemble(f.domain, Potential::constant(10, 0.5));
  const auto K = P.action_matrix(everything(*f.domain));
  // row i: (w(i,i-1) + w(i,i+1))/mu(i) + D on the diagonal, -w/mu off it
  const int i = 4;  // label 5
  CHECK_THAT(K(i, i), WithinRel((4.5 * 4.5 + 5.5 * 5.5) / 25.0 + 0.5, 1e-15));
  CHECK_THAT(K(i, i + 1), WithinRel(-5.5 * 5.5 / 25.0, 1e-15));
  CHECK_THAT(K(i, i - 1), WithinRel(-4.5 * 4.5 / 25.0, 1e-15));
  CHECK(P.potential(i) == 0.5);
  VertexFunction ones(10, 1.0);
  const auto Pu = P.apply(ones);
  CHECK_THAT(Pu[i], WithinAbs(0.5, 1e-15));      // constants: only D survives inside
  CHECK_THAT(Pu[9], WithinAbs(0.5, 1e-15));      // last vertex has no outer edge in the ambient domain
}

TEST_CASE("adjoint", "[operator]") {
  auto lat = make_fixture("lat1", 10);
  auto P = assemble(lat.domain, Potential::indicator(*lat.domain, 2, 0.3));
  const auto s = everything(*lat.domain);
  CHECK(adjoint(P).action_matrix(s) == P.action_matrix(s));

  auto d = one_way();
  auto Q = assemble(d);
  const auto sd = everything(*d);
  const auto K = Q.action_matrix(sd);
  const auto Ks = adjoint(Q).action_matrix(sd);
  CHECK(K(0, 1) == -1.0);
  CHECK(Ks(1, 0) == -0.5);  // K(0,1) mu(0) / mu(1)
  CHECK(Ks(0, 1) == 0.0);
  // diag(mu) K* = (diag(mu) K)^T
  const Eigen::VectorXd mu = Q.measure_on(sd);
  CHECK(((mu.asDiagonal() * Ks) - (mu.asDiagonal() * K).transpose()).norm() == 0.0);
  CHECK(adjoint(adjoint(Q)).action_matrix(sd) == K);
}

TEST_CASE("shift", "[operator]") {
  auto one = fixtures::single_vertex();
  auto P = assemble(one, Potential::constant(1, 1.0));
  const auto s = everything(*one);
  CHECK(shift(P, 0.0).action_matrix(s) == P.action_matrix(s));
  auto S = shift(P, 1.0);
  CHECK(S.potential(0) == 0.0);
  for (double t : {0.5, 1.0, 7.0}) CHECK(heat_kernel_finite(S, s, 0, 0, t) == 1.0);

  auto lat = make_fixture("lat1", 40);
  auto L = assemble(lat.domain);
  const auto& lvl = lat.exhaustion.level(3);
  for (double t : {0.5, 2.0, 6.0}) {
    const Eigen::MatrixXd a = heat_matrix_finite(shift(L, -0.8), lvl, t);
    const Eigen::MatrixXd b = std::exp(-0.8 * t) * heat_matrix_finite(L, lvl, t);
    CHECK(((a - b).array().abs() <= 1e-13 * b.array().abs()).all());
  }
}

TEST_CASE("quadratic form", "[operator]") {
  auto one = fixtures::single_vertex();
  CHECK(quadratic_form(assemble(one, Potential::constant(1, 2.5)), {1.0}) == 2.5);
  auto two = fixtures::two_vertex();
  auto P = assemble(two);
  CHECK(quadratic_form(P, {1.0, 0.0}) == 1.0);
  CHECK(quadratic_form(P, {1.0, 1.0}) == 0.0);
  // Q[u] = <Pu, u> in L^2(mu)
  auto f = build_radial(3, 10, 1.0);
  auto R = assemble(f.domain, Potential::constant(10, 0.25));
  VertexFunction u(10);
  for (int i = 0; i < 10; ++i) u[i] = std::sin(0.3 * i) + 0.1 * i;
  CHECK_THAT(quadratic_form(R, u), WithinRel(inner_product(*f.domain, R.apply(u), u), 1e-13));
  CHECK_THROWS_AS(quadratic_form(assemble(one_way()), {1.0, 0.0}), ValidationError);
}

TEST_CASE("potentials", "[operator]") {
  Potential v({1.0, -2.0, 0.0, 3.0});
  CHECK(v.support() == std::vector<int>{0, 1, 3});
  CHECK(v.positive_part()[1] == 0.0);
  CHECK(v.positive_part()[3] == 3.0);
  CHECK(v.negative_part()[1] == 2.0);
  CHECK(v.negative_part()[0] == 0.0);
  CHECK(!v.is_nonnegative());
  CHECK(v.abs().is_nonnegative());
  CHECK(v.scaled(2.0)[3] == 6.0);
  CHECK(Potential::zero(3).is_zero());

  auto lat = make_fixture("lat1", 10);
  auto P = assemble(lat.domain);
  auto Q = perturb(P, Potential::indicator(*lat.domain, 0, 2.0), 0.5);
  CHECK(Q.potential(lat.domain->index_of(0)) == 1.0);
  CHECK(Q.potential(lat.domain->index_of(1)) == 0.0);
  CHECK_THROWS_AS(assemble(lat.domain, Potential::zero(3)), ValidationError);
  CHECK_THROWS_AS(Potential::indicator(*lat.domain, 99), ValidationError);
}

TEST_CASE("potential files", "[operator]") {
  auto lat = make_fixture("lat1", 10);
  const auto path = std::filesystem::temp_directory_path() / "critlab_test_potential.txt";
  {
    std::ofstream out(path);
    out << "# bump\n0 -1.5\n2 0.25\n";
  }
  auto v = read_potential_file(*lat.domain, path.string());
  CHECK(v[lat.domain->index_of(0)] == -1.5);
  CHECK(v[lat.domain->index_of(2)] == 0.25);
  CHECK(v.support().size() == 2);
  {
    std::ofstream out(path);
    out << "0 1\n1\n";
  }
  CHECK_THROWS_AS(read_potential_file(*lat.domain, path.string()), ValidationError);
  std::filesystem::remove(path);
}
