#pragma once

#include "rtmm/angular_quadrature.hpp"
#include "rtmm/core.hpp"
#include "rtmm/dg.hpp"
#include "rtmm/mesh.hpp"
#include "rtmm/metric.hpp"
#include "rtmm/mmpde.hpp"
#include "rtmm/norms.hpp"
#include "rtmm/problems.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace rtmm {

enum class MeshMode { fixed, moving };

inline std::string to_string(MeshMode m) { return m == MeshMode::fixed ? "fixed" : "moving"; }

/// Everything a run needs besides output handling.
struct RunSettings {
  std::string problem = "ex1-1d";
  int degree = 2;
  int n = 20;  // 1D: elements; 2D: squares per side (2 n^2 triangles)
  MeshMode mode = MeshMode::fixed;
  double dt = 1e-3;
  double t_end = 0.1;
  std::optional<double> tau;  // default from the problem
  TransportOptions transport;
  int order_1d = 8;
  int n_polar = 8;
  int n_azimuthal = 8;
  std::optional<CustomProblemSpec> custom;  // used when problem == "custom"
  int smoothing_passes = 2;
  double metric_ceiling = 0.0;  // cap on the eigenvalues of |H|/alpha; 0: none
  MmpdeOptions mmpde;
  int init_adapt = 5;
  int norm_subdivisions = 0;  // 0: 1 for smooth problems, 4 otherwise
  unsigned seed = 12345;

  int elements(int dim) const { return dim == 1 ? n : 2 * n * n; }
  int dimension() const { return custom ? custom->dimension : problem_dimension(problem); }
};

struct StepRecord {
  int step = 0;
  double t = 0.0;
  int si_iterations = 0;
  int sweep_violations = 0;
  std::optional<NormTriple> norms;
  MmpdeReport mmpde;
  double min_volume = 0.0;
};

/// Time stepping of one configured run: mesh, field, optional adaptation and
/// error bookkeeping. Output is left to observers.
template <int Dim>
class Simulation {
public:
  explicit Simulation(const RunSettings& s)
      : settings_(s),
        problem_(s.custom ? make_custom<Dim>(*s.custom) : catalog<Dim>(s.problem)),
        quad_(make_quadrature(problem_, s)),
        solver_(problem_, quad_, s.degree, s.transport) {
    if (!(s.dt > 0.0) || !(s.t_end > 0.0)) throw Error("time step and final time must be positive");
    if (s.n < 1) throw Error("mesh size must be positive");
    tau_ = s.tau.value_or(problem_.default_tau());
    norm_subdivisions_ = s.norm_subdivisions > 0 ? s.norm_subdivisions : (problem_.smooth ? 1 : 4);
    steps_ = static_cast<int>(std::llround(s.t_end / s.dt));
    if (std::abs(steps_ * s.dt - s.t_end) > 1e-9 * s.t_end) throw Error("final time must be a multiple of the time step");
    const auto c0 = std::clock();
    reference_ = build_uniform<Dim>(problem_.domain, s.n);
    mesh_ = reference_;
    field_ = solver_.project_initial(mesh_, 0.0);
    if (s.mode == MeshMode::moving) {
      for (int i = 0; i < s.init_adapt; ++i) {
        const auto metric = compute_metric();
        auto res = adapt_mesh(mesh_, reference_, metric.tensor, tau_, s.dt, s.mmpde);
        mesh_ = std::move(res.mesh);
        initial_adapt_.push_back(std::move(res.report));
        field_ = solver_.project_initial(mesh_, 0.0);
      }
    }
    cpu_seconds_ = static_cast<double>(std::clock() - c0) / CLOCKS_PER_SEC;
  }

  const RunSettings& settings() const { return settings_; }
  const Problem<Dim>& problem() const { return problem_; }
  const AngularQuadrature<Dim>& quadrature() const { return quad_; }
  const TransportSolver<Dim>& solver() const { return solver_; }
  const Mesh<Dim>& mesh() const { return mesh_; }
  const Mesh<Dim>& reference_mesh() const { return reference_; }
  const DGField<Dim>& field() const { return field_; }
  double tau() const { return tau_; }
  int total_steps() const { return steps_; }
  int current_step() const { return step_; }
  double time() const { return step_ * settings_.dt; }
  const std::vector<StepRecord>& records() const { return records_; }
  const std::vector<MmpdeReport>& initial_adaptation() const { return initial_adapt_; }
  const GlobalNorms& global_norms() const { return global_; }
  const std::optional<MetricField<Dim>>& last_metric() const { return last_metric_; }
  double cpu_seconds() const { return cpu_seconds_; }  // setup and stepping, excluding norms and output
  bool finished() const { return step_ >= steps_; }

  MetricField<Dim> compute_metric() const {
    HessianRecovery<Dim> rec(mesh_, solver_.ops());
    return build_metric(field_, mesh_, rec, settings_.smoothing_passes, settings_.metric_ceiling);
  }

  StepNorms norms_now() const {
    if (!problem_.exact) throw Error("problem '" + problem_.name + "' has no exact solution");
    return spatial_norms(field_, solver_.ops(), mesh_, quad_, *problem_.exact, time(), norm_subdivisions_);
  }

  const StepRecord& step() {
    if (finished()) throw Error("simulation already reached the final time");
    const auto c0 = std::clock();
    StepRecord rec;
    rec.step = step_ + 1;
    rec.t = (step_ + 1) * settings_.dt;
    Mesh<Dim> next = mesh_;
    if (settings_.mode == MeshMode::moving) {
      last_metric_ = compute_metric();
      auto res = adapt_mesh(mesh_, reference_, last_metric_->tensor, tau_, settings_.dt, settings_.mmpde);
      next = std::move(res.mesh);
      rec.mmpde = std::move(res.report);
    }
    MovingMesh<Dim> slab{mesh_, next, settings_.dt};
    const auto v = slab.validate_slab();
    if (!v.ok()) throw MeshError("step " + std::to_string(rec.step) + ": " + v.message, v.element);
    const auto rep = solver_.advance(field_, slab, rec.t);
    mesh_ = std::move(next);
    ++step_;
    cpu_seconds_ += static_cast<double>(std::clock() - c0) / CLOCKS_PER_SEC;
    rec.si_iterations = rep.iterations;
    rec.sweep_violations = rep.sweep_violations;
    rec.min_volume = mesh_.min_volume();
    if (problem_.exact) {
      rec.norms = norms_now().aggregate;
      global_.add(*rec.norms, settings_.dt);
    }
    records_.push_back(std::move(rec));
    return records_.back();
  }

  void run(const std::function<void(const Simulation&)>& after_step = {}) {
    while (!finished()) {
      step();
      if (after_step) after_step(*this);
    }
  }

  int max_si_iterations() const {
    int m = 0;
    for (const auto& r : records_) m = std::max(m, r.si_iterations);
    return m;
  }

private:
  static AngularQuadrature<Dim> make_quadrature(const Problem<Dim>& p, const RunSettings& s) {
    if (p.fixed_direction) return single_direction<Dim>(*p.fixed_direction);
    if constexpr (Dim == 1) {
      return gauss_legendre_1d(s.order_1d);
    } else {
      return legendre_chebyshev_2d(s.n_polar, s.n_azimuthal);
    }
  }

  RunSettings settings_;
  Problem<Dim> problem_;
  AngularQuadrature<Dim> quad_;
  TransportSolver<Dim> solver_;
  double tau_ = 0.1;
  int norm_subdivisions_ = 1;
  int steps_ = 0;
  int step_ = 0;
  Mesh<Dim> reference_;
  Mesh<Dim> mesh_;
  DGField<Dim> field_;
  std::vector<StepRecord> records_;
  std::vector<MmpdeReport> initial_adapt_;
  std::optional<MetricField<Dim>> last_metric_;
  GlobalNorms global_;
  double cpu_seconds_ = 0.0;
};

}  // namespace rtmm
