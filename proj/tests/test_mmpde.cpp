#include "properties.hpp"

#include <catch_amalgamated.hpp>

using namespace rtmm;
using Catch::Matchers::WithinAbs;

namespace {

const Box<2> kUnit2{Vec<2>(0.0, 0.0), Vec<2>(1.0, 1.0)};
const Box<1> kUnit1{Vec<1>(0.0), Vec<1>(1.0)};

}  // namespace

TEST_CASE("dG/dJ by hand for M = diag(4, 1), J = I") {
  const Mat<2> m = Vec<2>(4.0, 1.0).asDiagonal();
  const auto d = g_derivatives<2>(Mat<2>::Identity(), 1.0, m);
  const Mat<2> expect = (10.0 / 3.0) * Mat<2>(Vec<2>(0.25, 1.0).asDiagonal());
  CHECK((d.d_jacobian - expect).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("G derivatives against central differences") {
  const auto o = props::g_derivative_check(31);
  INFO(o.worst);
  CHECK(o.ok);
}

TEST_CASE("energy and velocities against the straight-summation oracle") {
  const auto o = props::mmpde_velocity_check(32);
  INFO(o.worst);
  CHECK(o.ok);
}

TEST_CASE("uniform mesh with identity metric is an equilibrium") {
  const auto mesh = build_uniform<2>(kUnit2, 6);
  const double tau = 0.1;
  MeshFunctional<2> f(mesh, std::vector<Mat<2>>(mesh.num_elements(), Mat<2>::Identity()), tau);
  const auto v = f.velocities(mesh);
  for (int j = 0; j < mesh.num_vertices(); ++j)
    if (mesh.topo->vertex_kind[j] == VertexKind::interior) CHECK(v[j].norm() <= 1e-10 / tau);
  Mesh<2> comp{mesh.topo, mesh.x};
  integrate_mmpde(f, comp, 1e-3);
  for (int j = 0; j < mesh.num_vertices(); ++j) CHECK((comp.x[j] - mesh.x[j]).norm() <= 1e-8 / 6.0);
}

TEST_CASE("energy never rises over accepted substeps") {
  const auto o = props::energy_monotone_check();
  INFO(o.worst);
  CHECK(o.ok);
}

TEST_CASE("substeps shrink under a stiff metric and the report stays consistent") {
  const auto mesh = build_uniform<1>(kUnit1, 20);
  std::vector<Mat<1>> metric;
  for (int k = 0; k < mesh.num_elements(); ++k) metric.push_back(Mat<1>::Constant(k == 10 ? 1e4 : 1.0));
  MeshFunctional<1> f(mesh, metric, 0.01);
  Mesh<1> comp{mesh.topo, mesh.x};
  MmpdeOptions opts;
  const auto rep = integrate_mmpde(f, comp, 1e-2, opts);
  CHECK(rep.energies.size() == static_cast<size_t>(rep.substeps + 1));
  CHECK(rep.covered > 0.0);
  CHECK(rep.covered <= 1.0 + 1e-12);
  CHECK(rep.stopped_early == (rep.covered < 1.0 - 1e-12));
  CHECK(validate(comp).ok());
  for (int k = 0; k < comp.num_elements(); ++k) CHECK(comp.signed_volume(k) >= opts.area_floor * mesh.signed_volume(k));
}

TEST_CASE("piecewise-linear mesh map, three-vertex example") {
  auto physical = build_uniform<1>(kUnit1, 2);
  const auto reference = physical;
  Mesh<1> comp{physical.topo, physical.x};
  comp.x[1][0] = 0.25;
  const auto next = new_physical_mesh(physical, comp, reference);
  CHECK(next.x[0][0] == 0.0);
  CHECK(next.x[2][0] == 1.0);
  CHECK_THAT(next.x[1][0], WithinAbs(2.0 / 3.0, 1e-15));
}

TEST_CASE("identity correspondence reproduces the physical mesh") {
  std::mt19937_64 rng(8);
  const auto physical = props::jittered_mesh<2>(kUnit2, 5, 0.3, rng);
  const auto reference = build_uniform<2>(kUnit2, 5);
  Mesh<2> comp{reference.topo, reference.x};
  const auto next = new_physical_mesh(physical, comp, reference);
  for (int j = 0; j < physical.num_vertices(); ++j) CHECK((next.x[j] - physical.x[j]).norm() < 1e-14);
}

TEST_CASE("boundary vertices stay on the boundary after adaptation") {
  const auto reference = build_uniform<2>(kUnit2, 8);
  std::vector<Mat<2>> metric;
  for (int k = 0; k < reference.num_elements(); ++k) {
    const double r = (reference.centroid(k) - Vec<2>(0.3, 0.0)).norm();
    metric.push_back((1.0 + 50.0 * std::exp(-50.0 * r * r)) * Mat<2>::Identity());
  }
  const auto res = adapt_mesh(reference, reference, metric, 0.01, 1e-3);
  const auto& t = *reference.topo;
  double moved = 0.0;
  for (int j = 0; j < t.num_vertices; ++j) {
    moved = std::max(moved, (res.mesh.x[j] - reference.x[j]).norm());
    if (t.vertex_kind[j] == VertexKind::interior) continue;
    const auto& p = reference.x[j];
    for (int d = 0; d < 2; ++d)
      if (p[d] == 0.0 || p[d] == 1.0) CHECK(std::abs(res.mesh.x[j][d] - p[d]) <= 1e-12);
  }
  CHECK(moved > 1e-4);
  CHECK(validate(res.mesh).ok());
}
