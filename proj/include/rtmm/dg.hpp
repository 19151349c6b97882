#pragma once

#include "rtmm/angular_quadrature.hpp"
#include "rtmm/basis.hpp"
#include "rtmm/core.hpp"
#include "rtmm/mesh.hpp"
#include "rtmm/problems.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <queue>
#include <string>
#include <thread>
#include <vector>

namespace rtmm {

/// Modal coefficients for every direction, element and mode.
template <int Dim>
struct DGField {
  int degree = 1;
  int modes = 0;
  int directions = 0;
  int elements = 0;
  double time = 0.0;
  std::vector<double> coef;  // index ((m * elements + k) * modes + p)

  DGField() = default;
  DGField(int degree_, int directions_, int elements_)
      : degree(degree_), modes(num_modes(Dim, degree_)), directions(directions_), elements(elements_),
        coef(static_cast<size_t>(directions_) * elements_ * modes, 0.0) {}

  size_t offset(int m, int k) const { return (static_cast<size_t>(m) * elements + k) * modes; }
  Eigen::Map<Eigen::VectorXd> block(int m, int k) { return {coef.data() + offset(m, k), modes}; }
  Eigen::Map<const Eigen::VectorXd> block(int m, int k) const { return {coef.data() + offset(m, k), modes}; }
};

template <int Dim>
struct ElementGeometry {
  Vec<Dim> origin;
  Mat<Dim> jac;
  Mat<Dim> jac_inv;
  double volume = 0.0;
  std::array<Vec<Dim>, Dim + 1> normal;
  std::array<double, Dim + 1> measure;
};

template <int Dim>
std::vector<ElementGeometry<Dim>> compute_geometry(const Mesh<Dim>& mesh) {
  std::vector<ElementGeometry<Dim>> g(mesh.num_elements());
  for (int k = 0; k < mesh.num_elements(); ++k) {
    auto& e = g[k];
    e.origin = mesh.vertex(k, 0);
    e.jac = mesh.jacobian(k);
    e.jac_inv = e.jac.inverse();
    e.volume = mesh.signed_volume(k);
    if (!(e.volume > 0.0)) throw MeshError("non-positive element volume", k);
    for (int f = 0; f <= Dim; ++f) std::tie(e.normal[f], e.measure[f]) = mesh.facet_normal(k, f);
  }
  return g;
}

/// Element-wise L2 projection of f onto the modal basis of the given mesh.
template <int Dim, class F>
LocalVector project_element(const ReferenceOperators<Dim>& ops, const Mesh<Dim>& mesh, int k, F&& f) {
  LocalVector c = LocalVector::Zero(ops.modes());
  const Vec<Dim> x0 = mesh.vertex(k, 0);
  const Mat<Dim> jac = mesh.jacobian(k);
  for (int q = 0; q < ops.vol.size(); ++q) c += ops.vol.weights[q] * f(Vec<Dim>(x0 + jac * ops.vol.points[q])) * ops.vol_phi[q];
  return c;
}

/// Value of direction m of the field at a physical point inside element k.
template <int Dim>
double evaluate(const DGField<Dim>& field, const ReferenceOperators<Dim>& ops, const Mesh<Dim>& mesh, int m, int k,
                const Vec<Dim>& x, double tol = 1e-9) {
  const auto l = barycentric(mesh, k, x);
  if (*std::min_element(l.begin(), l.end()) < -tol) throw Error("evaluate: point is outside element " + std::to_string(k));
  Vec<Dim> ref;
  for (int i = 0; i < Dim; ++i) ref[i] = l[i + 1];
  return ops.basis.values(ref).dot(field.block(m, k));
}

enum class SweepOrdering { topological, centroid };

struct Sweep {
  std::vector<int> order;
  int violations = 0;  // upwind dependencies that come after their dependent element
};

/// Element ordering for one direction. An element depends on the neighbors
/// across its inflow facets (direction . outward normal < 0).
template <int Dim>
Sweep sweep_order(const Mesh<Dim>& mesh, const std::vector<ElementGeometry<Dim>>& geom, const Vec<Dim>& dir,
                  SweepOrdering mode) {
  const auto& topo = *mesh.topo;
  const int n = mesh.num_elements();
  std::vector<double> key(n);
  for (int k = 0; k < n; ++k) key[k] = mesh.centroid(k).dot(dir);
  auto before = [&](int a, int b) { return key[a] < key[b] || (key[a] == key[b] && a < b); };
  auto inflow_neighbor = [&](int k, int f) {
    const int nb = topo.neighbor[k][f];
    return nb >= 0 && geom[k].normal[f].dot(dir) < 0.0 ? nb : -1;
  };

  Sweep s;
  s.order.reserve(n);
  if (mode == SweepOrdering::centroid) {
    s.order.resize(n);
    for (int k = 0; k < n; ++k) s.order[k] = k;
    std::sort(s.order.begin(), s.order.end(), before);
  } else {
    std::vector<int> indeg(n, 0);
    for (int k = 0; k < n; ++k)
      for (int f = 0; f <= Dim; ++f)
        if (inflow_neighbor(k, f) >= 0) ++indeg[k];
    auto cmp = [&](int a, int b) { return before(b, a); };
    std::priority_queue<int, std::vector<int>, decltype(cmp)> ready(cmp);
    for (int k = 0; k < n; ++k)
      if (indeg[k] == 0) ready.push(k);
    std::vector<int> by_key(n);
    for (int k = 0; k < n; ++k) by_key[k] = k;
    std::sort(by_key.begin(), by_key.end(), before);
    std::vector<char> done(n, 0);
    size_t cursor = 0;
    while (static_cast<int>(s.order.size()) < n) {
      int k;
      if (!ready.empty()) {
        k = ready.top();
        ready.pop();
        if (done[k]) continue;
      } else {
        // dependency cycle: release the most upstream remaining element
        while (done[by_key[cursor]]) ++cursor;
        k = by_key[cursor];
      }
      done[k] = 1;
      s.order.push_back(k);
      for (int f = 0; f <= Dim; ++f) {
        const int nb = topo.neighbor[k][f];
        if (nb < 0 || done[nb]) continue;
        // k is upwind of nb when the shared facet is inflow for nb
        if (geom[k].normal[f].dot(dir) > 0.0 && --indeg[nb] == 0) ready.push(nb);
      }
    }
  }
  std::vector<int> pos(n);
  for (int i = 0; i < n; ++i) pos[s.order[i]] = i;
  for (int k = 0; k < n; ++k)
    for (int f = 0; f <= Dim; ++f) {
      const int nb = inflow_neighbor(k, f);
      if (nb >= 0 && pos[nb] > pos[k]) ++s.violations;
    }
  return s;
}

struct TransportOptions {
  double tolerance = 1e-12;
  int max_iterations = 200;
  int growth_limit = 5;  // abort after this many consecutive delta increases
  bool velocity_corrected_inflow = false;
  SweepOrdering ordering = SweepOrdering::topological;
  bool parallel_directions = false;  // Jacobi in angle, directions on threads
  int threads = 0;                   // 0: hardware concurrency
  // when sigma_s = 0 and every sweep respects all dependencies, one sweep is the exact solution
  bool stop_after_exact_sweep = true;
  double cache_budget = 2.0e7;  // doubles allowed for cached local inverses
  // start the iteration from 2 I^n - I^(n-1) instead of I^n once a previous step exists
  bool extrapolate_guess = true;
};

struct StepReport {
  int iterations = 0;
  std::vector<double> deltas;
  int sweep_violations = 0;
};

/// Backward-Euler DG step of the discrete-ordinate system on a moving mesh,
/// solved by source iteration with element-by-element upwind sweeps.
template <int Dim>
class TransportSolver {
public:
  TransportSolver(Problem<Dim> problem, AngularQuadrature<Dim> quad, int degree, TransportOptions opts = {})
      : problem_(std::move(problem)), quad_(std::move(quad)), ops_(degree), opts_(opts) {
    if (degree < 1 || degree > 2) throw Error("TransportSolver: degree must be 1 or 2");
    for (int m = 0; m < quad_.count(); ++m)
      if (quad_.weights[m] <= 0.0) throw Error("TransportSolver: angular weights must be positive");
  }

  const Problem<Dim>& problem() const { return problem_; }
  const AngularQuadrature<Dim>& quadrature() const { return quad_; }
  const ReferenceOperators<Dim>& ops() const { return ops_; }
  const TransportOptions& options() const { return opts_; }
  TransportOptions& options() { return opts_; }
  int degree() const { return ops_.basis.degree(); }

  DGField<Dim> project(const Mesh<Dim>& mesh, const typename Problem<Dim>::Fn& f, double t) const {
    DGField<Dim> field(degree(), quad_.count(), mesh.num_elements());
    field.time = t;
    for (int m = 0; m < quad_.count(); ++m) {
      const Vec<Dim> dir = quad_.directions[m];
      for (int k = 0; k < mesh.num_elements(); ++k)
        field.block(m, k) = project_element(ops_, mesh, k, [&](const Vec<Dim>& x) { return f(x, dir, t); });
    }
    return field;
  }

  DGField<Dim> project_initial(const Mesh<Dim>& mesh, double t = 0.0) const { return project(mesh, problem_.initial, t); }

  /// Advance `field` (coefficients at t_n on slab.old_mesh) to t_new on slab.new_mesh.
  StepReport advance(DGField<Dim>& field, const MovingMesh<Dim>& slab, double t_new) {
    const Mesh<Dim>& mesh = slab.new_mesh;
    const auto& topo = *mesh.topo;
    const int n = mesh.num_elements();
    const int L = ops_.modes();
    const int na = quad_.count();
    const double dt = slab.dt;
    const double c = problem_.c;
    if (!(dt > 0.0)) throw Error("advance: time step must be positive");
    if (field.elements != n || field.directions != na || field.modes != L) throw Error("advance: field shape mismatch");

    field_topology_ = mesh.topo;
    geom_ = compute_geometry(mesh);
    const auto vel = slab.velocities();
    bool moving = false;
    for (const auto& v : vel) moving = moving || v.squaredNorm() > 0.0;
    const int nf = Dim + 1;
    const int nfq = ops_.face.size();

    // direction-independent parts of the local matrices
    base_.assign(n, LocalMatrix());
    mvel_.assign(moving ? n * nf : 0, LocalMatrix());
    xvel_.assign(moving ? n * nf : 0, LocalMatrix());
    face_pn_.assign(moving ? static_cast<size_t>(n) * nf * nfq : 0, 0.0);
    for (int k = 0; k < n; ++k) {
      const auto& g = geom_[k];
      LocalMatrix a = LocalMatrix::Identity(L, L) * (g.volume / (c * dt));
      if (problem_.sigma_t_constant) {
        a += LocalMatrix::Identity(L, L) * (g.volume * *problem_.sigma_t_constant);
      } else {
        for (int q = 0; q < ops_.vol.size(); ++q) {
          const Vec<Dim> x = g.origin + g.jac * ops_.vol.points[q];
          a += g.volume * ops_.vol.weights[q] * problem_.sigma_t(x) * ops_.vol_phi[q] * ops_.vol_phi[q].transpose();
        }
      }
      if (moving) {
        std::array<Vec<Dim>, Dim + 1> v;
        for (int i = 0; i <= Dim; ++i) v[i] = vel[topo.elements[k][i]];
        Mat<Dim> dv;
        for (int i = 0; i < Dim; ++i) dv.col(i) = v[i + 1] - v[0];
        const double div = (dv * g.jac_inv).trace();
        LocalMatrix vm = LocalMatrix::Identity(L, L) * div;
        for (int q = 0; q < ops_.vol.size(); ++q) {
          const Vec<Dim> pi = v[0] + dv * ops_.vol.points[q];
          const Vec<Dim> ref_vel = g.jac_inv * pi;
          vm += ops_.vol.weights[q] * (ops_.vol_grad[q].transpose() * ref_vel) * ops_.vol_phi[q].transpose();
        }
        a += (g.volume / c) * vm;
        for (int f = 0; f < nf; ++f) {
          LocalMatrix mv = LocalMatrix::Zero(L, L), xv = LocalMatrix::Zero(L, L);
          const int nb = topo.neighbor[k][f];
          const int gnb = topo.neighbor_facet[k][f];
          for (int s = 0; s < nfq; ++s) {
            const Vec<Dim> ref = reference_facet_point<Dim>(f, ops_.face.params[s]);
            const Vec<Dim> pi = v[0] + dv * ref;
            const double pn = pi.dot(g.normal[f]);
            face_pn_[(static_cast<size_t>(k) * nf + f) * nfq + s] = pn;
            mv += ops_.face.weights[s] * pn * ops_.face_phi[f][s] * ops_.face_phi[f][s].transpose();
            if (nb >= 0) {
              const LocalVector other = ops_.basis.values(reference_facet_point<Dim>(gnb, 1.0 - ops_.face.params[s]));
              xv += ops_.face.weights[s] * pn * ops_.face_phi[f][s] * other.transpose();
            }
          }
          mvel_[k * nf + f] = mv;
          xvel_[k * nf + f] = xv;
        }
      }
      base_[k] = a;
    }

    // fixed right-hand sides: old-time term, emission source, boundary inflow
    const std::vector<double> old = field.coef;
    rhs0_.assign(field.coef.size(), 0.0);
    for (int m = 0; m < na; ++m) {
      const Vec<Dim> dir = quad_.directions[m];
      for (int k = 0; k < n; ++k) {
        const auto& g = geom_[k];
        Eigen::Map<Eigen::VectorXd> r(rhs0_.data() + field.offset(m, k), L);
        r = (g.volume / (c * dt)) * Eigen::Map<const Eigen::VectorXd>(old.data() + field.offset(m, k), L);
        for (int q = 0; q < ops_.vol.size(); ++q) {
          const Vec<Dim> x = g.origin + g.jac * ops_.vol.points[q];
          r += (g.volume * ops_.vol.weights[q] * problem_.source(x, dir, t_new)) * ops_.vol_phi[q];
        }
        for (int f = 0; f < nf; ++f) {
          if (topo.neighbor[k][f] >= 0) continue;
          const double on = dir.dot(g.normal[f]);
          for (int s = 0; s < nfq; ++s) {
            const double factor = on - facet_velocity(k, f, s, moving) / c;
            if (is_outflow(on, factor)) continue;
            const Vec<Dim> x = g.origin + g.jac * reference_facet_point<Dim>(f, ops_.face.params[s]);
            r -= (g.measure[f] * ops_.face.weights[s] * factor * problem_.boundary(x, dir, t_new)) * ops_.face_phi[f][s];
          }
        }
      }
    }

    StepReport rep;
    sweeps_.assign(na, {});
    for (int m = 0; m < na; ++m) {
      sweeps_[m] = sweep_order(mesh, geom_, quad_.directions[m], opts_.ordering);
      rep.sweep_violations += sweeps_[m].violations;
    }
    const double entries = static_cast<double>(na) * n * L * L;
    cache_.clear();
    if (entries <= opts_.cache_budget) {
      cache_.resize(static_cast<size_t>(na) * n);
      for (int m = 0; m < na; ++m)
        for (int k = 0; k < n; ++k) cache_[static_cast<size_t>(m) * n + k] = assemble(m, k, moving).inverse();
    }

    const bool decoupled = problem_.sigma_s == 0.0 && rep.sweep_violations == 0;
    // the first increment absorbs any mismatch between the initial data and the equations
    const bool have_history = opts_.extrapolate_guess && history_ >= 2 && previous_.size() == field.coef.size() &&
                              previous_topology_ == mesh.topo && previous_time_ < field.time;
    std::vector<double> current = field.coef;
    if (have_history && !decoupled) {
      const double ratio = (t_new - field.time) / (field.time - previous_time_);
      for (size_t i = 0; i < current.size(); ++i) field.coef[i] += ratio * (current[i] - previous_[i]);
    }
    previous_ = std::move(current);
    previous_time_ = field.time;
    history_ = previous_topology_ == mesh.topo ? history_ + 1 : 1;
    previous_topology_ = mesh.topo;
    psi_.assign(n, LocalVector::Zero(L));
    int growth = 0;
    for (int it = 1; it <= opts_.max_iterations; ++it) {
      for (int k = 0; k < n; ++k) {
        psi_[k].setZero(L);
        for (int m = 0; m < na; ++m) psi_[k] += quad_.weights[m] * field.block(m, k);
      }
      double delta = 0.0;
      if (opts_.parallel_directions && na > 1) {
        delta = sweep_parallel(field, moving);
      } else {
        for (int m = 0; m < na; ++m) delta = std::max(delta, sweep(field, m, moving, true));
      }
      rep.deltas.push_back(delta);
      rep.iterations = it;
      if (delta <= opts_.tolerance || (decoupled && opts_.stop_after_exact_sweep)) {
        field.time = t_new;
        return rep;
      }
      if (it > 1 && delta > rep.deltas[it - 2]) {
        if (++growth >= opts_.growth_limit)
          throw Error("source iteration diverging: delta " + std::to_string(delta) + " after " + std::to_string(it) +
                      " iterations");
      } else {
        growth = 0;
      }
    }
    throw Error("source iteration did not converge in " + std::to_string(opts_.max_iterations) +
                " iterations; last delta " + std::to_string(rep.deltas.back()));
  }

  /// Sweep orders and violation counts from the most recent step.
  const std::vector<Sweep>& last_sweeps() const { return sweeps_; }

private:
  bool is_outflow(double on, double factor) const { return opts_.velocity_corrected_inflow ? factor >= 0.0 : on >= 0.0; }

  double facet_velocity(int k, int f, int s, bool moving) const {
    if (!moving) return 0.0;
    return face_pn_[(static_cast<size_t>(k) * (Dim + 1) + f) * ops_.face.size() + s];
  }

  /// True when every node of the facet has the same inflow/outflow class as the sign of on.
  bool uniform_facet(int k, int f, double on, bool moving) const {
    if (!opts_.velocity_corrected_inflow || !moving) return true;
    const bool out = on >= 0.0;
    for (int s = 0; s < ops_.face.size(); ++s)
      if (((on - facet_velocity(k, f, s, moving) / problem_.c) >= 0.0) != out) return false;
    return true;
  }

  LocalMatrix assemble(int m, int k, bool moving) const {
    const auto& g = geom_[k];
    const Vec<Dim> dir = quad_.directions[m];
    const double c = problem_.c;
    LocalMatrix a = base_[k];
    const Vec<Dim> ref_dir = g.jac_inv * dir;
    for (int e = 0; e < Dim; ++e) a -= (g.volume * ref_dir[e]) * ops_.grad_mass[e];
    for (int f = 0; f <= Dim; ++f) {
      const double on = dir.dot(g.normal[f]);
      if (uniform_facet(k, f, on, moving)) {
        if (on < 0.0) continue;
        a += (g.measure[f] * on) * ops_.face_mass[f];
        if (moving) a -= (g.measure[f] / c) * mvel_[k * (Dim + 1) + f];
      } else {
        for (int s = 0; s < ops_.face.size(); ++s) {
          const double factor = on - facet_velocity(k, f, s, moving) / c;
          if (factor < 0.0) continue;
          a += (g.measure[f] * ops_.face.weights[s] * factor) * ops_.face_phi[f][s] * ops_.face_phi[f][s].transpose();
        }
      }
    }
    return a;
  }

  /// Inflow contribution from interior neighbors, using their current coefficients.
  LocalVector neighbor_inflow(const DGField<Dim>& field, int m, int k, bool moving) const {
    const auto& topo = *field_topology_;
    const auto& g = geom_[k];
    const Vec<Dim> dir = quad_.directions[m];
    const double c = problem_.c;
    const int L = ops_.modes();
    LocalVector r = LocalVector::Zero(L);
    for (int f = 0; f <= Dim; ++f) {
      const int nb = topo.neighbor[k][f];
      if (nb < 0) continue;
      const int gnb = topo.neighbor_facet[k][f];
      const double on = dir.dot(g.normal[f]);
      const LocalVector inb = field.block(m, nb);
      if (uniform_facet(k, f, on, moving)) {
        if (on >= 0.0) continue;
        r -= (g.measure[f] * on) * (ops_.cross[f][gnb] * inb);
        if (moving) r += (g.measure[f] / c) * (xvel_[k * (Dim + 1) + f] * inb);
      } else {
        for (int s = 0; s < ops_.face.size(); ++s) {
          const double factor = on - facet_velocity(k, f, s, moving) / c;
          if (factor >= 0.0) continue;
          const LocalVector other = ops_.basis.values(reference_facet_point<Dim>(gnb, 1.0 - ops_.face.params[s]));
          r -= (g.measure[f] * ops_.face.weights[s] * factor * other.dot(inb)) * ops_.face_phi[f][s];
        }
      }
    }
    return r;
  }

  /// One sweep of direction m in place. Returns the largest coefficient change.
  double sweep(DGField<Dim>& field, int m, bool moving, bool update_psi) {
    const int L = ops_.modes();
    const int n = field.elements;
    const double w = quad_.weights[m];
    double delta = 0.0;
    for (int k : sweeps_[m].order) {
      LocalVector b = Eigen::Map<const Eigen::VectorXd>(rhs0_.data() + field.offset(m, k), L);
      if (problem_.sigma_s != 0.0) b += (problem_.sigma_s * geom_[k].volume) * psi_[k];
      b += neighbor_inflow(field, m, k, moving);
      LocalVector x;
      if (!cache_.empty()) {
        x = cache_[static_cast<size_t>(m) * n + k] * b;
      } else {
        x = assemble(m, k, moving).partialPivLu().solve(b);
      }
      if (!x.allFinite())
        throw Error("non-finite local solution at element " + std::to_string(k) + ", direction " + std::to_string(m));
      auto blk = field.block(m, k);
      const LocalVector diff = x - LocalVector(blk);
      delta = std::max(delta, diff.cwiseAbs().maxCoeff());
      if (update_psi) psi_[k] += w * diff;
      blk = x;
    }
    return delta;
  }

  double sweep_parallel(DGField<Dim>& field, bool moving) {
    const int na = quad_.count();
    int nt = opts_.threads > 0 ? opts_.threads : static_cast<int>(std::thread::hardware_concurrency());
    nt = std::clamp(nt, 1, na);
    std::vector<double> deltas(na, 0.0);
    std::vector<std::thread> pool;
    for (int t = 0; t < nt; ++t)
      pool.emplace_back([&, t] {
        for (int m = t; m < na; m += nt) deltas[m] = sweep(field, m, moving, false);
      });
    for (auto& th : pool) th.join();
    return *std::max_element(deltas.begin(), deltas.end());
  }

  Problem<Dim> problem_;
  AngularQuadrature<Dim> quad_;
  ReferenceOperators<Dim> ops_;
  TransportOptions opts_;

  std::shared_ptr<const Topology<Dim>> field_topology_;
  std::vector<ElementGeometry<Dim>> geom_;
  std::vector<LocalMatrix> base_, mvel_, xvel_, cache_;
  std::vector<double> face_pn_, rhs0_;
  std::vector<LocalVector> psi_;
  std::vector<Sweep> sweeps_;
  std::vector<double> previous_;  // coefficients at the start of the last step
  double previous_time_ = 0.0;
  int history_ = 0;
  std::shared_ptr<const Topology<Dim>> previous_topology_;
};

}  // namespace rtmm
