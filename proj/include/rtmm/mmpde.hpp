#pragma once

#include "rtmm/core.hpp"
#include "rtmm/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace rtmm {

/// Balance between the alignment and equidistribution terms of the mesh energy.
inline constexpr double kMeshTheta = 1.0 / 3.0;

template <int Dim>
struct GDerivatives {
  Mat<Dim> d_jacobian;  // dG/dJ in the transposed layout: (i, j) entry is dG/dJ_ji
  double d_det = 0.0;
};

/// G(J, det J, M) = theta sqrt(det M) tr(J M^-1 J^T)^d + (1 - 2 theta) d^d sqrt(det M) (det J / sqrt(det M))^2.
template <int Dim>
double g_value(const Mat<Dim>& j, const Mat<Dim>& m) {
  const double sq = std::sqrt(m.determinant());
  const double tr = (j * m.inverse() * j.transpose()).trace();
  const double dj = j.determinant();
  return kMeshTheta * sq * std::pow(tr, Dim) + (1.0 - 2.0 * kMeshTheta) * std::pow(Dim, Dim) * dj * dj / sq;
}

template <int Dim>
GDerivatives<Dim> g_derivatives(const Mat<Dim>& j, double det_j, const Mat<Dim>& m) {
  const double sq = std::sqrt(m.determinant());
  const Mat<Dim> minv = m.inverse();
  const double tr = (j * minv * j.transpose()).trace();
  GDerivatives<Dim> g;
  g.d_jacobian = 2.0 * Dim * kMeshTheta * sq * std::pow(tr, Dim - 1) * minv * j.transpose();
  g.d_det = 2.0 * (1.0 - 2.0 * kMeshTheta) * std::pow(Dim, Dim) * det_j / sq;
  return g;
}

/// The mesh energy sum_K |K| G(E_Kc E_K^-1) as a function of the computational
/// vertices, for a frozen physical mesh and per-element metric.
template <int Dim>
class MeshFunctional {
public:
  MeshFunctional(const Mesh<Dim>& physical, std::vector<Mat<Dim>> metric, double tau)
      : physical_(&physical), metric_(std::move(metric)), tau_(tau) {
    const int n = physical.num_elements();
    if (static_cast<int>(metric_.size()) != n) throw Error("MeshFunctional: need one metric tensor per element");
    if (!(tau > 0.0)) throw Error("MeshFunctional: tau must be positive");
    ek_inv_.resize(n);
    vol_.resize(n);
    for (int k = 0; k < n; ++k) {
      const Mat<Dim> e = physical.jacobian(k);
      if (!(e.determinant() > 0.0)) throw MeshError("physical element is degenerate", k);
      ek_inv_[k] = e.inverse();
      vol_[k] = physical.signed_volume(k);
    }
    const auto& topo = *physical.topo;
    vertex_scale_.resize(topo.num_vertices);
    for (int v = 0; v < topo.num_vertices; ++v) {
      Mat<Dim> avg = Mat<Dim>::Zero();
      double area = 0.0;
      for (int k : topo.vertex_patch[v]) {
        avg += vol_[k] * metric_[k];
        area += vol_[k];
      }
      vertex_scale_[v] = std::sqrt((avg / area).determinant()) / tau_;
    }
  }

  const Mesh<Dim>& physical() const { return *physical_; }
  const std::vector<Mat<Dim>>& metric() const { return metric_; }
  double tau() const { return tau_; }
  /// sqrt(det M(x_j)) / tau with M(x_j) the area-weighted patch average.
  double vertex_scale(int v) const { return vertex_scale_[v]; }

  double energy(const Mesh<Dim>& comp) const {
    double s = 0.0;
    for (int k = 0; k < comp.num_elements(); ++k) {
      const Mat<Dim> ec = comp.jacobian(k);
      if (!(ec.determinant() > 0.0)) throw MeshError("computational element is degenerate", k);
      s += vol_[k] * g_value<Dim>(ec * ek_inv_[k], metric_[k]);
    }
    return s;
  }

  /// Gradient of the energy with respect to every computational vertex.
  std::vector<Vec<Dim>> gradient(const Mesh<Dim>& comp) const {
    const auto& topo = *comp.topo;
    std::vector<Vec<Dim>> g(topo.num_vertices, Vec<Dim>::Zero());
    for (int k = 0; k < comp.num_elements(); ++k) {
      const Mat<Dim> ec = comp.jacobian(k);
      const double det_ec = ec.determinant();
      if (!(det_ec > 0.0)) throw MeshError("computational element is degenerate", k);
      const Mat<Dim> j = ec * ek_inv_[k];
      const auto d = g_derivatives<Dim>(j, j.determinant(), metric_[k]);
      // row i: dG/dxi_i; the local velocities are the negated rows
      const Mat<Dim> rows = ek_inv_[k] * d.d_jacobian + d.d_det * (det_ec * ek_inv_[k].determinant()) * ec.inverse();
      Vec<Dim> sum = Vec<Dim>::Zero();
      for (int i = 1; i <= Dim; ++i) {
        const Vec<Dim> r = vol_[k] * rows.row(i - 1).transpose();
        g[topo.elements[k][i]] += r;
        sum += r;
      }
      g[topo.elements[k][0]] -= sum;
    }
    return g;
  }

  /// Nodal mesh velocities: -(sqrt(det M_j) / tau) times the energy gradient,
  /// with corners fixed and boundary vertices sliding along their face.
  std::vector<Vec<Dim>> velocities(const Mesh<Dim>& comp) const {
    const auto& topo = *comp.topo;
    auto v = gradient(comp);
    for (int j = 0; j < topo.num_vertices; ++j) {
      v[j] *= -vertex_scale_[j];
      switch (topo.vertex_kind[j]) {
        case VertexKind::corner: v[j].setZero(); break;
        case VertexKind::boundary: {
          const Vec<Dim>& t = topo.vertex_tangent[j];
          v[j] = v[j].dot(t) * t;
          break;
        }
        case VertexKind::interior: break;
      }
    }
    return v;
  }

private:
  const Mesh<Dim>* physical_;
  std::vector<Mat<Dim>> metric_;
  double tau_;
  std::vector<Mat<Dim>> ek_inv_;
  std::vector<double> vol_;
  std::vector<double> vertex_scale_;
};

struct MmpdeOptions {
  int initial_substeps = 5;
  int max_substeps = 100;  // accepted substeps per call
  double min_fraction = 1e-9;  // smallest substep as a fraction of the span
  double area_floor = 0.1;  // no element may shrink below this fraction of its area...
  bool floor_per_substep = false;  // ...before the substep (true) or at the start of the span (false)
  double energy_slack = 1e-12;  // relative uphill allowance for round-off
};

struct MmpdeReport {
  int substeps = 0;
  int rejections = 0;
  bool stopped_early = false;  // substep cap reached or no admissible step left
  double covered = 0.0;  // fraction of the requested span actually integrated
  std::vector<double> energies;  // initial energy, then one per accepted substep
  double relaxation = 1.0;  // fraction of the mapped displacement kept to stay valid
};

/// Explicit Euler on d(xi)/dt = velocities(xi) over a time span `duration`,
/// starting from `comp`. A substep is rejected and halved when any element
/// would shrink below `area_floor` of its reference area or the energy would
/// rise; two acceptances in a row double it again, up to the initial size.
/// Integration ends early after `max_substeps` accepted substeps or when no
/// admissible substep remains above the minimum.
template <int Dim>
MmpdeReport integrate_mmpde(const MeshFunctional<Dim>& functional, Mesh<Dim>& comp, double duration,
                            const MmpdeOptions& opts = {}) {
  MmpdeReport rep;
  const double h_min = duration * opts.min_fraction;
  const double h_max = duration / opts.initial_substeps;
  double h = h_max;
  int streak = 0;  // consecutive accepted substeps
  double elapsed = 0.0;
  double energy = functional.energy(comp);
  rep.energies.push_back(energy);
  std::vector<double> area(comp.num_elements());
  for (int k = 0; k < comp.num_elements(); ++k) area[k] = comp.signed_volume(k);
  Mesh<Dim> trial{comp.topo, comp.x};
  while (elapsed < duration * (1.0 - 1e-12)) {
    if (rep.substeps >= opts.max_substeps) break;
    const auto v = functional.velocities(comp);
    bool accepted = false;
    while (true) {
      const double step = std::min(h, duration - elapsed);
      for (int j = 0; j < comp.num_vertices(); ++j) trial.x[j] = comp.x[j] + step * v[j];
      bool shrink_ok = true;
      int bad = -1;
      for (int k = 0; k < comp.num_elements(); ++k) {
        const double a = trial.signed_volume(k);
        if (a <= 0.0) {
          bad = k;
          break;
        }
        if (a < opts.area_floor * area[k]) shrink_ok = false;
      }
      double e_new = energy;
      bool energy_ok = false;
      if (bad < 0 && shrink_ok) {
        e_new = functional.energy(trial);
        energy_ok = e_new <= energy + opts.energy_slack * std::abs(energy);
      }
      if (energy_ok) {
        comp.x = trial.x;
        if (opts.floor_per_substep)
          for (int k = 0; k < comp.num_elements(); ++k) area[k] = comp.signed_volume(k);
        elapsed += step;
        energy = e_new;
        rep.energies.push_back(energy);
        ++rep.substeps;
        accepted = true;
        if (++streak >= 2) {  // recover after transient stiffness
          h = std::min(2.0 * h, h_max);
          streak = 0;
        }
        break;
      }
      if (h <= h_min * (1.0 + 1e-12)) {
        if (bad >= 0) throw MeshError("MMPDE substep inverts an element even at the minimum substep", bad);
        break;
      }
      ++rep.rejections;
      streak = 0;
      h = std::max(0.5 * h, h_min);
    }
    if (!accepted) break;
  }
  rep.stopped_early = elapsed < duration * (1.0 - 1e-12);
  rep.covered = elapsed / duration;
  return rep;
}

/// Maps each reference vertex through the piecewise-linear correspondence from
/// the computational mesh to the physical mesh: locate it in the computational
/// mesh and apply the element's barycentric weights to the physical vertices.
template <int Dim>
Mesh<Dim> new_physical_mesh(const Mesh<Dim>& physical, const Mesh<Dim>& comp, const Mesh<Dim>& reference) {
  const auto& topo = *physical.topo;
  const auto& dom = topo.domain;
  PointLocator<Dim> locator(comp);
  Mesh<Dim> out{physical.topo, physical.x};
  for (int j = 0; j < topo.num_vertices; ++j) {
    if (topo.vertex_kind[j] == VertexKind::corner) {
      out.x[j] = reference.x[j];
      continue;
    }
    const Vec<Dim>& p = reference.x[j];
    const int k = locator.locate(p);
    if (k < 0) throw MeshError("reference vertex " + std::to_string(j) + " lies outside the computational mesh", -1);
    auto l = barycentric(comp, k, p);
    double s = 0.0;
    for (auto& li : l) {
      li = std::max(li, 0.0);
      s += li;
    }
    Vec<Dim> x = Vec<Dim>::Zero();
    for (int i = 0; i <= Dim; ++i) x += (l[i] / s) * physical.vertex(k, i);
    if (topo.vertex_kind[j] == VertexKind::boundary) {
      // keep the coordinate normal to the face exactly on the face
      for (int d = 0; d < Dim; ++d)
        if (std::abs(topo.vertex_tangent[j][d]) < 0.5) x[d] = p[d];
      x = x.cwiseMax(dom.lo).cwiseMin(dom.hi);
    }
    out.x[j] = x;
  }
  return out;
}

/// Largest fraction theta in {1, 1/2, ..., 2^-max_halvings} for which
/// x_old + theta (x_new - x_old) is a valid mesh; 0 if none is.
template <int Dim>
double relax_to_valid(const Mesh<Dim>& old_mesh, Mesh<Dim>& new_mesh, int max_halvings = 10) {
  const std::vector<Vec<Dim>> target = new_mesh.x;
  double theta = 1.0;
  for (int i = 0; i <= max_halvings; ++i, theta *= 0.5) {
    for (size_t j = 0; j < target.size(); ++j) new_mesh.x[j] = old_mesh.x[j] + theta * (target[j] - old_mesh.x[j]);
    if (validate(new_mesh).ok() && MovingMesh<Dim>{old_mesh, new_mesh, 1.0}.validate_slab().ok()) return theta;
  }
  new_mesh.x = old_mesh.x;
  return 0.0;
}

template <int Dim>
struct AdaptResult {
  Mesh<Dim> mesh;
  MmpdeReport report;
};

/// One adaptation step: integrate the MMPDE from the reference computational
/// mesh for `duration` and map the reference vertices back to physical space.
/// The piecewise-linear map can fold an element whose image straddles a sharp
/// kink; the displacement is then shortened until the mesh is valid again.
template <int Dim>
AdaptResult<Dim> adapt_mesh(const Mesh<Dim>& physical, const Mesh<Dim>& reference, std::vector<Mat<Dim>> metric,
                            double tau, double duration, const MmpdeOptions& opts = {}) {
  MeshFunctional<Dim> functional(physical, std::move(metric), tau);
  Mesh<Dim> comp{reference.topo, reference.x};
  auto rep = integrate_mmpde(functional, comp, duration, opts);
  auto mesh = new_physical_mesh(physical, comp, reference);
  rep.relaxation = relax_to_valid(physical, mesh);
  require_valid(mesh, "new physical mesh");
  return {std::move(mesh), std::move(rep)};
}

}  // namespace rtmm
