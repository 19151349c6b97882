#include "properties.hpp"

#include <catch_amalgamated.hpp>

using namespace rtmm;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

const Box<2> kUnit2{Vec<2>(0.0, 0.0), Vec<2>(1.0, 1.0)};

double smooth(const Vec<2>& x, const Vec<2>&, double) { return std::sin(2.0 * x[0]) * std::cos(3.0 * x[1]); }

double projection_l1(int degree, int n) {
  auto p = make_freestream<2>();
  TransportSolver<2> solver(p, single_direction<2>(Vec<2>(0.6, 0.0)), degree);
  const auto mesh = build_uniform<2>(kUnit2, n);
  const auto field = solver.project(mesh, smooth, 0.0);
  return spatial_norms(field, solver.ops(), mesh, solver.quadrature(), smooth, 0.0, 2).aggregate.l1;
}

}  // namespace

TEST_CASE("norms of a known error") {
  auto p = make_freestream<2>();
  const auto quad = legendre_chebyshev_2d(2, 4);
  TransportSolver<2> solver(p, quad, 1);
  const auto mesh = build_uniform<2>(Box<2>{Vec<2>(0.0, 0.0), Vec<2>(2.0, 1.0)}, 3);
  auto field = solver.project(mesh, [](const Vec<2>&, const Vec<2>&, double) { return 0.0; }, 0.0);
  const auto n = spatial_norms(field, solver.ops(), mesh, quad, [](const Vec<2>&, const Vec<2>&, double) { return 3.0; }, 0.0);
  CHECK_THAT(n.aggregate.l1, WithinRel(6.0, 1e-13));
  CHECK_THAT(n.aggregate.l2, WithinRel(3.0 * std::sqrt(2.0), 1e-13));
  CHECK_THAT(n.aggregate.linf, WithinRel(3.0, 1e-13));
  REQUIRE(n.per_direction.size() == static_cast<size_t>(quad.count()));
}

TEST_CASE("projected polynomials have zero error") {
  auto p = make_freestream<2>();
  TransportSolver<2> solver(p, single_direction<2>(Vec<2>(0.6, 0.0)), 2);
  const auto mesh = build_uniform<2>(kUnit2, 4);
  auto quad = [](const Vec<2>& x, const Vec<2>&, double) { return x[0] * x[1] - x[1] * x[1] + 0.5; };
  const auto field = solver.project(mesh, quad, 0.0);
  const auto n = spatial_norms(field, solver.ops(), mesh, solver.quadrature(), quad, 0.0, 3);
  CHECK(n.aggregate.l1 < 1e-13);
  CHECK(n.aggregate.linf < 1e-12);
}

TEST_CASE("projection error converges at order k+1") {
  for (int k : {1, 2}) {
    std::vector<std::pair<int, double>> samples;
    for (int n : {4, 8, 16}) samples.emplace_back(2 * n * n, projection_l1(k, n));
    const double order = convergence_order(samples, 2);
    INFO("degree " << k << " order " << order);
    CHECK(order > k + 1 - 0.2);
    CHECK(order < k + 1 + 0.2);
  }
}

TEST_CASE("time integral uses the right endpoint of each step") {
  GlobalNorms g;
  g.add({1.0, 2.0, 3.0}, 0.1);
  g.add({3.0, 1.0, 1.0}, 0.2);
  CHECK_THAT(g.value().l1, WithinAbs(0.7, 1e-15));
  CHECK_THAT(g.value().l2, WithinAbs(0.4, 1e-15));
  CHECK_THAT(g.value().linf, WithinAbs(0.5, 1e-15));
  CHECK(g.steps() == 2);
}

TEST_CASE("least-squares order of an exact power law") {
  // e = C h^p with h = N^(-1/d)
  const double p = 2.5;
  std::vector<std::pair<int, double>> s1, s2;
  for (int n : {10, 20, 40, 80}) s1.emplace_back(n, 3.0 * std::pow(n, -p));
  for (int n : {5, 10, 20}) s2.emplace_back(2 * n * n, 0.1 * std::pow(2.0 * n * n, -p / 2.0));
  CHECK_THAT(convergence_order(s1, 1), WithinAbs(p, 1e-12));
  CHECK_THAT(convergence_order(s2, 2), WithinAbs(p, 1e-12));
  CHECK_THROWS_AS(convergence_order({{10, 1.0}}, 1), Error);
  CHECK_THROWS_AS(convergence_order({{10, 1.0}, {20, 0.0}}, 1), Error);
  CHECK_THROWS_AS(convergence_order({{10, 1.0}, {10, 0.5}}, 1), Error);
}
