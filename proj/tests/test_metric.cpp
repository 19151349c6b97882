#include "properties.hpp"

#include <catch_amalgamated.hpp>

using namespace rtmm;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

const Box<2> kUnit2{Vec<2>(0.0, 0.0), Vec<2>(1.0, 1.0)};

DGField<2> project_directions(const ReferenceOperators<2>& ops, const Mesh<2>& mesh,
                              const std::vector<std::function<double(const Vec<2>&)>>& fs) {
  DGField<2> field;
  field.degree = ops.basis.degree();
  field.modes = ops.modes();
  field.directions = static_cast<int>(fs.size());
  field.elements = mesh.num_elements();
  field.coef.assign(static_cast<size_t>(field.modes) * field.elements * fs.size(), 0.0);
  for (int m = 0; m < field.directions; ++m)
    for (int k = 0; k < mesh.num_elements(); ++k) field.block(m, k) = project_element(ops, mesh, k, fs[m]);
  return field;
}

bool interior(const Vec<2>& c) { return c.minCoeff() > 0.25 && c.maxCoeff() < 0.75; }

}  // namespace

TEST_CASE("absolute value of a symmetric matrix") {
  Mat<2> h;
  h << 0.0, 1.0, 1.0, 0.0;
  CHECK((abs_matrix<2>(h) - Mat<2>::Identity()).cwiseAbs().maxCoeff() < 1e-14);
  Eigen::SelfAdjointEigenSolver<Mat<2>> es(abs_matrix<2>(h));
  CHECK(es.eigenvalues().minCoeff() >= 0.0);
}

TEST_CASE("intersection of the two axis-aligned ellipses") {
  const Mat<2> a = Vec<2>(4.0, 1.0).asDiagonal(), b = Vec<2>(1.0, 4.0).asDiagonal();
  const Mat<2> c = intersect<2>(a, b);
  CHECK((c - Mat<2>(Vec<2>(4.0, 4.0).asDiagonal())).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("intersection containment and idempotence on random pairs") {
  const auto o = props::intersection_check(2024);
  INFO(o.worst << ' ' << o.detail);
  CHECK(o.ok);
}

TEST_CASE("intersection rejects indefinite input") {
  Mat<2> bad;
  bad << 1.0, 0.0, 0.0, -1.0;
  CHECK_THROWS_AS(intersect<2>(Mat<2>::Identity(), bad), Error);
}

TEST_CASE("metric determinant identity") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const Mat<2> h = props::random_spd<2>(rng, 1e-3, 1e3);
    const double alpha = 0.37;
    const Mat<2> m = metric_from_hessian<2>(h, alpha);
    const double expect = std::pow((Mat<2>::Identity() + h / alpha).determinant(), 1.0 / 3.0);
    CHECK_THAT(std::sqrt(m.determinant()), WithinRel(expect, 1e-12));
  }
}

TEST_CASE("alpha equation is solved on the non-clamped branch") {
  const auto o = props::alpha_check(99);
  INFO(o.worst << ' ' << o.detail);
  CHECK(o.ok);
}

TEST_CASE("flat fields clamp alpha") {
  std::vector<Mat<2>> h(10, Mat<2>::Zero());
  std::vector<double> v(10, 0.1);
  CHECK(solve_alpha<2>(h, v).clamped);
}

TEST_CASE("Hessian recovery: constants and linears give zero, quadratics their Hessian") {
  const auto mesh = build_uniform<2>(kUnit2, 10);
  ReferenceOperators<2> ops(2);
  HessianRecovery<2> rec(mesh, ops);
  const auto field = project_directions(ops, mesh,
                                        {[](const Vec<2>&) { return 3.0; },
                                         [](const Vec<2>& x) { return 1.0 + 2.0 * x[0] - x[1]; },
                                         [](const Vec<2>& x) { return x.squaredNorm(); },
                                         [](const Vec<2>& x) { return x[0] * x[1]; }});
  const auto h0 = rec.recover(field, 0), h1 = rec.recover(field, 1);
  const auto h2 = rec.recover(field, 2), h3 = rec.recover(field, 3);
  for (int k = 0; k < mesh.num_elements(); ++k) {
    CHECK(h0[k].cwiseAbs().maxCoeff() < 1e-10);
    CHECK(h1[k].cwiseAbs().maxCoeff() < 1e-10);
    if (!interior(mesh.centroid(k))) continue;
    CHECK_THAT(h2[k](0, 0), WithinRel(2.0, 0.1));
    CHECK_THAT(h2[k](1, 1), WithinRel(2.0, 0.1));
    CHECK(std::abs(h2[k](0, 1)) < 0.2);
    CHECK_THAT(h3[k](0, 1), WithinRel(1.0, 0.1));
    CHECK(std::abs(h3[k](0, 0)) < 0.1);
    CHECK(std::abs(h3[k](1, 1)) < 0.1);
  }
}

TEST_CASE("combined metric of two layers contains each constituent") {
  const auto mesh = build_uniform<2>(kUnit2, 16);
  ReferenceOperators<2> ops(2);
  HessianRecovery<2> rec(mesh, ops);
  const auto field = project_directions(ops, mesh,
                                        {[](const Vec<2>& x) { return std::tanh(20.0 * (x[0] - 0.3)); },
                                         [](const Vec<2>& x) { return std::tanh(20.0 * (x[0] - 0.7)); }});
  const auto combined = build_metric(field, mesh, rec, 0);
  std::vector<double> vol;
  for (int k = 0; k < mesh.num_elements(); ++k) vol.push_back(mesh.signed_volume(k));
  double near_a = 0.0, near_b = 0.0, far = 0.0;
  for (int m = 0; m < 2; ++m) {
    auto h = rec.recover(field, m);
    for (auto& x : h) x = abs_matrix<2>(x);
    const double alpha = solve_alpha<2>(h, vol).alpha;
    for (int k = 0; k < mesh.num_elements(); ++k) {
      const Mat<2> mk = metric_from_hessian<2>(h[k], alpha);
      // C contains M_k: the boundary of the C-ellipse lies inside the M_k ellipse
      CHECK(props::containment_excess(mk, mk, combined.tensor[k], 360) < 1e-9);
    }
  }
  for (int k = 0; k < mesh.num_elements(); ++k) {
    const double x = mesh.centroid(k)[0];
    Eigen::SelfAdjointEigenSolver<Mat<2>> es(combined.tensor[k]);
    const double top = es.eigenvalues().maxCoeff();
    if (std::abs(x - 0.3) < 0.05) near_a = std::max(near_a, top);
    else if (std::abs(x - 0.7) < 0.05) near_b = std::max(near_b, top);
    else if (std::abs(x - 0.5) < 0.05) far = std::max(far, top);
  }
  CHECK(near_a > 3.0 * far);
  CHECK(near_b > 3.0 * far);
}

TEST_CASE("smoothing leaves a uniform metric unchanged") {
  const auto mesh = build_uniform<2>(kUnit2, 4);
  Mat<2> m;
  m << 2.0, 0.3, 0.3, 1.0;
  const auto out = smooth_metric<2>(std::vector<Mat<2>>(mesh.num_elements(), m), mesh, 3);
  for (const auto& x : out) CHECK((x - m).cwiseAbs().maxCoeff() < 1e-14);
}
