#pragma once

// Property checks with independent oracles. Shared by the unit tests and the
// acceptance runner; each returns the worst observed deviation and the pinned
// tolerance it was held to.

#include "rtmm/rtmm.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace rtmm::props {

inline std::string fmt_short(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

struct Outcome {
  Outcome(std::string n, double t) : name(std::move(n)), tol(t) {}

  std::string name;
  double worst = 0.0;
  double tol = 0.0;
  bool ok = true;
  std::string detail;

  void observe(double v) {
    if (!(v <= worst)) worst = v;  // NaN propagates
    ok = worst <= tol;
  }
};

// ---------------------------------------------------------------- quadrature

/// Gauss-Legendre nodes as eigenvalues of the Jacobi matrix of the Legendre recurrence.
inline std::vector<double> golub_welsch_nodes(int n) {
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double b = k / std::sqrt(4.0 * k * k - 1.0);
    j(k, k - 1) = j(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = es.eigenvalues()[i];
  return out;
}

/// First components of the Jacobi eigenvectors give the weights: 2 v_0^2.
inline std::vector<double> golub_welsch_weights(int n) {
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double b = k / std::sqrt(4.0 * k * k - 1.0);
    j(k, k - 1) = j(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = 2.0 * es.eigenvectors()(0, i) * es.eigenvectors()(0, i);
  return out;
}

/// (1/2) int_{-1}^{1} mu^p dmu
inline double mu_moment(int p) { return p % 2 ? 0.0 : 1.0 / (p + 1.0); }

/// (1/2pi) int_0^{2pi} cos^b sin^c dphi = (b-1)!! (c-1)!! / (b+c)!! for even b, c.
inline double ring_moment(int b, int c) {
  if (b % 2 || c % 2) return 0.0;
  auto dfact = [](int k) {
    double r = 1.0;
    for (; k > 1; k -= 2) r *= k;
    return r;
  };
  return dfact(b - 1) * dfact(c - 1) / dfact(b + c);
}

inline Outcome quadrature_1d() {
  Outcome o{"1D angular quadrature: normalization, Golub-Welsch nodes, degree 2n-1 exactness", 1e-13};
  for (int n = 1; n <= 8; ++n) {
    const auto q = gauss_legendre_1d(n);
    const auto gw = golub_welsch_nodes(n);
    const auto gww = golub_welsch_weights(n);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      sum += q.weights[i];
      o.observe(std::abs(q.directions[i][0] - gw[i]));
      o.observe(std::abs(q.weights[i] - 0.5 * gww[i]));
    }
    o.observe(std::abs(sum - 1.0));
    for (int p = 0; p <= 2 * n - 1; ++p) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += q.weights[i] * std::pow(q.mu[i], p);
      o.observe(std::abs(s - mu_moment(p)));
    }
  }
  return o;
}

inline Outcome quadrature_2d() {
  Outcome o{"2D angular quadrature: normalization, mu^a cos^b sin^c exactness, zeta^2+eta^2 = 2/3", 1e-12};
  for (int np : {2, 4, 8})
    for (int na : {4, 8, 16}) {
      const auto q = legendre_chebyshev_2d(np, na);
      double sum = 0.0, planar = 0.0;
      for (int m = 0; m < q.count(); ++m) {
        sum += q.weights[m];
        planar += q.weights[m] * q.directions[m].squaredNorm();
      }
      o.observe(std::abs(sum - 1.0));
      o.observe(std::abs(planar - 2.0 / 3.0));
      for (int a = 0; a <= 2 * np - 1; ++a)
        for (int b = 0; b < na; ++b)
          for (int c = 0; b + c < na; ++c) {
            double s = 0.0;
            for (int m = 0; m < q.count(); ++m)
              s += q.weights[m] * std::pow(q.mu[m], a) * std::pow(std::cos(q.phi[m]), b) * std::pow(std::sin(q.phi[m]), c);
            o.observe(std::abs(s - mu_moment(a) * ring_moment(b, c)));
          }
    }
  return o;
}

// ---------------------------------------------------------------- meshes

/// Uniform mesh with interior vertices displaced by up to `amp` times the spacing.
template <int Dim>
Mesh<Dim> jittered_mesh(const Box<Dim>& box, int n, double amp, std::mt19937_64& rng) {
  auto mesh = build_uniform<Dim>(box, n);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const Vec<Dim> h = (box.hi - box.lo) / n;
  const auto& topo = *mesh.topo;
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    if (topo.vertex_kind[v] != VertexKind::interior) continue;
    for (int d = 0; d < Dim; ++d) mesh.x[v][d] += amp * h[d] * u(rng);
  }
  return mesh;
}

/// Smooth interior displacement vanishing on the boundary of the unit box.
template <int Dim>
Vec<Dim> bump(const Vec<Dim>& x, double amp) {
  double s = 1.0;
  for (int d = 0; d < Dim; ++d) s *= std::sin(std::numbers::pi * x[d]);
  Vec<Dim> dx;
  for (int d = 0; d < Dim; ++d) dx[d] = amp * s * (d == 0 ? 1.0 : -0.5);
  return dx;
}

// ---------------------------------------------------------------- free stream

/// Max coefficient deviation from the projected constant after `steps` steps.
template <int Dim>
double freestream_drift(bool moving, int degree, int n, int steps) {
  auto p = make_freestream<Dim>();
  TransportSolver<Dim> solver(p, p.default_quadrature(), degree);
  auto mesh = build_uniform<Dim>(p.domain, n);
  const auto reference = mesh;
  auto field = solver.project_initial(mesh);
  const double dt = 1e-3;
  double worst = 0.0;
  for (int s = 1; s <= steps; ++s) {
    Mesh<Dim> next = mesh;
    if (moving) {
      // oscillating vertex motion, large enough to reshape elements noticeably
      const double amp = 0.08 * std::sin(0.7 * s);
      for (int v = 0; v < next.num_vertices(); ++v) next.x[v] = reference.x[v] + bump<Dim>(reference.x[v], amp);
    }
    MovingMesh<Dim> slab{mesh, next, dt};
    if (!slab.validate_slab().ok()) throw Error("freestream_drift: prescribed motion is invalid");
    solver.advance(field, slab, s * dt);
    mesh = next;
    const auto expect = solver.project(mesh, *p.exact, s * dt);
    for (size_t i = 0; i < field.coef.size(); ++i) worst = std::max(worst, std::abs(field.coef[i] - expect.coef[i]));
  }
  return worst;
}

inline Outcome freestream_fixed() {
  Outcome o{"free-stream preservation, fixed mesh (P1/P2, 1D/2D)", 1e-10};
  for (int k : {1, 2}) {
    o.observe(freestream_drift<1>(false, k, 16, 5));
    o.observe(freestream_drift<2>(false, k, 6, 5));
  }
  return o;
}

inline Outcome freestream_moving() {
  Outcome o{"free-stream preservation, prescribed moving mesh (P1/P2, 1D/2D)", 1e-8};
  for (int k : {1, 2}) {
    o.observe(freestream_drift<1>(true, k, 16, 5));
    o.observe(freestream_drift<2>(true, k, 6, 5));
  }
  return o;
}

// ---------------------------------------------------------------- mesh energy

/// G written out independently, with det J as a separate argument.
template <int Dim>
double g_oracle(const Mat<Dim>& j, double det_j, const Mat<Dim>& m) {
  const double theta = 1.0 / 3.0;
  const double sq = std::sqrt(m.determinant());
  const double tr = (j * m.inverse() * j.transpose()).trace();
  return theta * sq * std::pow(tr, Dim) + (1.0 - 2.0 * theta) * std::pow(double(Dim), Dim) * sq * std::pow(det_j / sq, 2.0);
}

template <int Dim>
Mat<Dim> random_spd(std::mt19937_64& rng, double lo = 0.2, double hi = 5.0) {
  std::uniform_real_distribution<double> ev(std::log(lo), std::log(hi)), ang(0.0, std::numbers::pi);
  if constexpr (Dim == 1) {
    return Mat<1>::Constant(std::exp(ev(rng)));
  } else {
    const double a = ang(rng);
    Mat<2> r;
    r << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
    const Vec<2> d(std::exp(ev(rng)), std::exp(ev(rng)));
    Mat<2> out = r * d.asDiagonal() * r.transpose();
    return 0.5 * (out + out.transpose());
  }
}

template <int Dim>
Mat<Dim> random_jacobian(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  Mat<Dim> j = Mat<Dim>::Identity();
  for (int a = 0; a < Dim; ++a)
    for (int b = 0; b < Dim; ++b) j(a, b) += u(rng);
  if (j.determinant() <= 0.1) j(0, 0) += 1.0;
  return j;
}

template <int Dim>
void g_derivative_samples(Outcome& o, std::mt19937_64& rng, int samples) {
  for (int s = 0; s < samples; ++s) {
    const Mat<Dim> j = random_jacobian<Dim>(rng);
    const Mat<Dim> m = random_spd<Dim>(rng);
    const double det = j.determinant();
    const auto d = g_derivatives<Dim>(j, det, m);
    const double h = 1e-6;
    Mat<Dim> fd;
    for (int a = 0; a < Dim; ++a)
      for (int b = 0; b < Dim; ++b) {
        Mat<Dim> jp = j, jm = j;
        jp(a, b) += h;
        jm(a, b) -= h;
        fd(b, a) = (g_oracle<Dim>(jp, det, m) - g_oracle<Dim>(jm, det, m)) / (2.0 * h);  // transposed layout
      }
    const double fd_det = (g_oracle<Dim>(j, det + h, m) - g_oracle<Dim>(j, det - h, m)) / (2.0 * h);
    o.observe((d.d_jacobian - fd).norm() / std::max(1.0, fd.norm()));
    o.observe(std::abs(d.d_det - fd_det) / std::max(1.0, std::abs(fd_det)));
    o.observe(std::abs(g_value<Dim>(j, m) - g_oracle<Dim>(j, det, m)) / std::max(1.0, std::abs(g_value<Dim>(j, m))));
  }
}

inline Outcome g_derivative_check(unsigned seed) {
  Outcome o{"dG/dJ and dG/ddetJ against central differences (100 samples per dimension)", 1e-6};
  std::mt19937_64 rng(seed);
  g_derivative_samples<1>(o, rng, 100);
  g_derivative_samples<2>(o, rng, 100);
  return o;
}

/// Straight summation of sum_K |K| G(E_c E^-1) from vertex coordinates.
template <int Dim>
double energy_oracle(const Mesh<Dim>& physical, const Mesh<Dim>& comp, const std::vector<Mat<Dim>>& metric) {
  double total = 0.0;
  for (int k = 0; k < physical.num_elements(); ++k) {
    Mat<Dim> e, ec;
    for (int i = 1; i <= Dim; ++i) {
      e.col(i - 1) = physical.vertex(k, i) - physical.vertex(k, 0);
      ec.col(i - 1) = comp.vertex(k, i) - comp.vertex(k, 0);
    }
    const double vol = std::abs(e.determinant()) / (Dim == 2 ? 2.0 : 1.0);
    const Mat<Dim> j = ec * e.inverse();
    total += vol * g_oracle<Dim>(j, j.determinant(), metric[k]);
  }
  return total;
}

template <int Dim>
void velocity_case(Outcome& o, std::mt19937_64& rng, int n) {
  const Box<Dim> box{Vec<Dim>::Zero(), Vec<Dim>::Ones()};
  const auto physical = jittered_mesh<Dim>(box, n, 0.25, rng);
  const auto comp0 = jittered_mesh<Dim>(box, n, 0.25, rng);
  std::vector<Mat<Dim>> metric;
  for (int k = 0; k < physical.num_elements(); ++k) metric.push_back(random_spd<Dim>(rng));
  const double tau = 0.1;
  MeshFunctional<Dim> f(physical, metric, tau);
  o.observe(std::abs(f.energy(comp0) - energy_oracle(physical, comp0, metric)) / energy_oracle(physical, comp0, metric));
  const auto v = f.velocities(comp0);
  const auto& topo = *physical.topo;
  double scale = 0.0;
  for (const auto& w : v) scale = std::max(scale, w.norm());
  for (int j = 0; j < topo.num_vertices; ++j) {
    Vec<Dim> grad;
    for (int d = 0; d < Dim; ++d) {
      const double h = 1e-6;
      Mesh<Dim> cp{comp0.topo, comp0.x}, cm{comp0.topo, comp0.x};
      cp.x[j][d] += h;
      cm.x[j][d] -= h;
      grad[d] = (energy_oracle(physical, cp, metric) - energy_oracle(physical, cm, metric)) / (2.0 * h);
    }
    Mat<Dim> avg = Mat<Dim>::Zero();
    double area = 0.0;
    for (int k = 0; k < topo.num_elements(); ++k)
      for (int i = 0; i <= Dim; ++i)
        if (topo.elements[k][i] == j) {
          avg += physical.signed_volume(k) * metric[k];
          area += physical.signed_volume(k);
        }
    Vec<Dim> expect = -std::sqrt((avg / area).determinant()) / tau * grad;
    if (topo.vertex_kind[j] == VertexKind::corner) expect.setZero();
    if (topo.vertex_kind[j] == VertexKind::boundary) {
      const Vec<Dim>& t = topo.vertex_tangent[j];
      expect = expect.dot(t) * t;
    }
    o.observe((v[j] - expect).norm() / scale);
  }
}

inline Outcome mmpde_velocity_check(unsigned seed) {
  Outcome o{"MMPDE velocities against -(sqrt(det M)/tau) times the FD energy gradient", 1e-5};
  std::mt19937_64 rng(seed);
  velocity_case<1>(o, rng, 12);
  velocity_case<2>(o, rng, 5);
  return o;
}

/// Runs the MMPDE with the metric of a sharp tanh layer and reports the largest uphill step.
template <int Dim>
void energy_case(Outcome& o, int n, int degree) {
  const Box<Dim> box{Vec<Dim>::Zero(), Vec<Dim>::Ones()};
  const auto reference = build_uniform<Dim>(box, n);
  Mesh<Dim> physical = reference;
  auto p = make_freestream<Dim>();
  p.initial = [](const Vec<Dim>& x, const Vec<Dim>&, double) { return std::tanh(30.0 * (x.sum() / Dim - 0.45)); };
  TransportSolver<Dim> solver(p, p.default_quadrature(), degree);
  for (int pass = 0; pass < 3; ++pass) {
    const auto field = solver.project_initial(physical);
    HessianRecovery<Dim> rec(physical, solver.ops());
    const auto metric = build_metric(field, physical, rec, 2);
    MeshFunctional<Dim> f(physical, metric.tensor, 0.01);
    Mesh<Dim> comp{reference.topo, reference.x};
    const auto rep = integrate_mmpde(f, comp, 1e-3);
    for (size_t i = 1; i < rep.energies.size(); ++i)
      o.observe(std::max(0.0, rep.energies[i] - rep.energies[i - 1]) / std::abs(rep.energies[i - 1]));
    auto next = new_physical_mesh(physical, comp, reference);
    relax_to_valid(physical, next);
    physical = std::move(next);
  }
}

inline Outcome energy_monotone_check() {
  Outcome o{"MMPDE energy non-increasing over accepted substeps", 1e-12};
  energy_case<1>(o, 40, 2);
  energy_case<2>(o, 12, 2);
  return o;
}

// ---------------------------------------------------------------- metric

/// Samples the boundary of {v : v^T C v < 1} and measures how far it leaves the A and B ellipses.
inline double containment_excess(const Mat<2>& a, const Mat<2>& b, const Mat<2>& c, int samples) {
  Eigen::SelfAdjointEigenSolver<Mat<2>> es(c);
  const Mat<2> c_inv_sqrt = es.eigenvectors() * es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
                            es.eigenvectors().transpose();
  double worst = 0.0;
  for (int s = 0; s < samples; ++s) {
    const double t = 2.0 * std::numbers::pi * s / samples;
    const Vec<2> v = c_inv_sqrt * Vec<2>(std::cos(t), std::sin(t));
    worst = std::max({worst, v.dot(a * v) - 1.0, v.dot(b * v) - 1.0});
  }
  return worst;
}

inline Outcome intersection_check(unsigned seed) {
  Outcome o{"metric intersection: containment on 1000 SPD pairs (1e4 boundary samples each), intersect(A,A)=A", 1e-9};
  std::mt19937_64 rng(seed);
  double self = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Mat<2> a = random_spd<2>(rng, 1e-2, 1e3), b = random_spd<2>(rng, 1e-2, 1e3);
    o.observe(containment_excess(a, b, intersect<2>(a, b), 10000));
    self = std::max(self, (intersect<2>(a, a) - a).cwiseAbs().maxCoeff() / a.cwiseAbs().maxCoeff());
  }
  // the self-intersection bound is tighter than the containment tolerance
  if (self > 1e-12) {
    o.ok = false;
    o.detail = "intersect(A,A) deviates by " + std::to_string(self);
  }
  return o;
}

inline Outcome alpha_check(unsigned seed) {
  Outcome o{"alpha equation residual (non-clamped branch)", 1e-8};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> vol(0.5, 2.0), big(0.0, 1.0);
  int solved = 0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Mat<2>> h;
    std::vector<double> v;
    for (int k = 0; k < 200; ++k) {
      Mat<2> m = random_spd<2>(rng, 1e-3, 1e4);
      if (big(rng) < 0.9) m *= 1e-3;  // a few elements carry most of the curvature
      h.push_back(m);
      v.push_back(vol(rng) / 200.0);
    }
    const auto sol = solve_alpha<2>(h, v);
    if (sol.clamped) continue;
    ++solved;
    double lhs = 0.0, rhs = 0.0;
    for (size_t k = 0; k < h.size(); ++k) {
      lhs += v[k] * std::sqrt(metric_from_hessian<2>(h[k], sol.alpha).determinant());
      rhs += 2.0 * v[k] * std::pow(h[k].determinant(), 1.0 / 3.0);
    }
    o.observe(std::abs(lhs - rhs) / rhs);
  }
  if (solved == 0) {
    o.ok = false;
    o.detail = "no trial reached the non-clamped branch";
  }
  return o;
}

// ---------------------------------------------------------------- problems

/// Continuous-equation residual bound for catalog entries without a stated one.
inline constexpr double kResidualTol = 1e-10;

inline Outcome manufactured_check() {
  Outcome o{"manufactured residual of every catalog entry with an exact solution", kResidualTol};
  auto one = [&](const auto& p, const auto& quad, double tol, bool discrete) {
    if (!p.exact) return;
    const auto r = manufactured_residual(p, quad, 200);
    const double v = discrete ? r.max_discrete : r.max_continuous;
    // scale every entry to the shared tolerance so `worst` stays comparable
    o.observe(v / tol * kResidualTol);
    if (!o.detail.empty()) o.detail += ' ';
    o.detail += p.name + '=' + fmt_short(v);
  };
  for (const auto& name : catalog_names()) {
    if (problem_dimension(name) == 1) {
      const auto p = catalog<1>(name);
      one(p, p.default_quadrature(), name == "ex1-1d" ? 1e-12 : kResidualTol, name == "ex1-1d");
    } else {
      const auto p = catalog<2>(name);
      one(p, p.default_quadrature(), name == "ex3-2d" ? 1e-11 : kResidualTol, false);
    }
  }
  return o;
}

}  // namespace rtmm::props
