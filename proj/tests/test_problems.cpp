#include "properties.hpp"

#include <catch_amalgamated.hpp>

using namespace rtmm;
using Catch::Matchers::WithinAbs;

namespace {

/// Random point on the boundary with an inflow direction from `quad`.
template <int Dim>
bool random_inflow(const Problem<Dim>& p, const AngularQuadrature<Dim>& quad, std::mt19937_64& rng, Vec<Dim>& x,
                   Vec<Dim>& dir) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int d = 0; d < Dim; ++d) x[d] = p.domain.lo[d] + (p.domain.hi[d] - p.domain.lo[d]) * u(rng);
  const int axis = static_cast<int>(u(rng) * Dim) % Dim;
  const bool high = u(rng) < 0.5;
  x[axis] = high ? p.domain.hi[axis] : p.domain.lo[axis];
  Vec<Dim> normal = Vec<Dim>::Zero();
  normal[axis] = high ? 1.0 : -1.0;
  dir = quad.directions[static_cast<int>(u(rng) * quad.count()) % quad.count()];
  return dir.dot(normal) < 0.0;
}

template <int Dim>
void check_data_consistency(const Problem<Dim>& p) {
  if (!p.exact) return;
  INFO(p.name);
  const auto quad = p.default_quadrature();
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    Vec<Dim> x, dir;
    for (int d = 0; d < Dim; ++d) x[d] = p.domain.lo[d] + (p.domain.hi[d] - p.domain.lo[d]) * u(rng);
    dir = quad.directions[i % quad.count()];
    if (p.initial_matches_exact) CHECK_THAT(p.initial(x, dir, 0.0), WithinAbs((*p.exact)(x, dir, 0.0), 1e-10));
    const double t = 0.1 * u(rng);
    if (random_inflow(p, quad, rng, x, dir)) CHECK_THAT(p.boundary(x, dir, t), WithinAbs((*p.exact)(x, dir, t), 1e-10));
  }
}

}  // namespace

TEST_CASE("catalog entries build and report their dimension") {
  for (const auto& name : catalog_names()) {
    INFO(name);
    if (problem_dimension(name) == 1) {
      const auto p = catalog<1>(name);
      CHECK(p.name == name);
      CHECK(p.default_tau() == (p.smooth ? 0.1 : 0.01));
    } else {
      const auto p = catalog<2>(name);
      CHECK(p.name == name);
      CHECK(p.default_tau() == (p.smooth ? 0.1 : 0.01));
    }
  }
  CHECK_THROWS_AS(catalog<1>("ex3-2d"), Error);
  CHECK_THROWS_AS(problem_dimension("nope"), Error);
}

TEST_CASE("coefficients are physical") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (const auto& name : catalog_names()) {
    INFO(name);
    if (problem_dimension(name) == 1) {
      const auto p = catalog<1>(name);
      for (int i = 0; i < 50; ++i) {
        const Vec<1> x(p.domain.lo[0] + (p.domain.hi[0] - p.domain.lo[0]) * u(rng));
        CHECK(p.sigma_t(x) >= p.sigma_s);
      }
    } else {
      const auto p = catalog<2>(name);
      for (int i = 0; i < 50; ++i) {
        const Vec<2> x(p.domain.lo[0] + (p.domain.hi[0] - p.domain.lo[0]) * u(rng),
                       p.domain.lo[1] + (p.domain.hi[1] - p.domain.lo[1]) * u(rng));
        CHECK(p.sigma_t(x) >= p.sigma_s);
      }
    }
  }
}

TEST_CASE("initial and inflow data agree with the exact solutions") {
  for (const auto& name : catalog_names()) {
    if (problem_dimension(name) == 1) check_data_consistency(catalog<1>(name));
    else check_data_consistency(catalog<2>(name));
  }
}

TEST_CASE("manufactured residuals vanish") {
  const auto o = props::manufactured_check();
  INFO(o.detail);
  CHECK(o.ok);
}

TEST_CASE("stated residual bounds for ex1-1d and ex3-2d") {
  const auto p1 = catalog<1>("ex1-1d");
  CHECK(manufactured_residual(p1, p1.default_quadrature(), 200).max_discrete <= 1e-12);
  const auto p3 = catalog<2>("ex3-2d");
  CHECK(manufactured_residual(p3, p3.default_quadrature(), 200).max_continuous <= 1e-11);
}

TEST_CASE("sphere mean of simple integrands") {
  CHECK_THAT(sphere_mean<2>([](const Vec<2>&) { return 1.0; }), WithinAbs(1.0, 1e-13));
  CHECK_THAT(sphere_mean<2>([](const Vec<2>& w) { return w.squaredNorm(); }), WithinAbs(2.0 / 3.0, 1e-13));
  CHECK_THAT(sphere_mean<1>([](const Vec<1>& w) { return std::abs(w[0]); }), WithinAbs(0.5, 1e-13));
}

TEST_CASE("custom problems interpolate their tables") {
  CustomProblemSpec s;
  s.sigma_t = 3.0;
  s.sigma_s = 1.0;
  s.initial.points = {{0.0}, {0.5}, {1.0}};
  s.initial.values = {0.0, 1.0, 4.0};
  s.boundary = s.initial;
  const auto p = make_custom<1>(s);
  CHECK_THAT(p.initial(Vec<1>(0.25), Vec<1>(1.0), 0.0), WithinAbs(0.5, 1e-15));
  CHECK_THAT(p.initial(Vec<1>(0.75), Vec<1>(1.0), 0.0), WithinAbs(2.5, 1e-15));
  CHECK_THAT(p.initial(Vec<1>(2.0), Vec<1>(1.0), 0.0), WithinAbs(4.0, 1e-15));
  s.sigma_s = 5.0;
  CHECK_THROWS_AS(make_custom<1>(s), Error);
}
