#pragma once

#include "rtmm/angular_quadrature.hpp"
#include "rtmm/basis.hpp"
#include "rtmm/core.hpp"
#include "rtmm/dg.hpp"
#include "rtmm/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <type_traits>
#include <utility>
#include <vector>

namespace rtmm {

struct NormTriple {
  double l1 = 0.0;
  double l2 = 0.0;
  double linf = 0.0;
};

struct StepNorms {
  std::vector<NormTriple> per_direction;
  NormTriple aggregate;  // L1, L2: weighted sum over directions; Linf: max over directions
};

/// Error norms of the DG field against `exact` at time t. Integrals use the
/// volume rule on each element, optionally on a uniform refinement of the
/// element with `subdivisions` pieces per edge (useful for discontinuous
/// solutions); Linf is the maximum over the same nodes.
template <int Dim>
StepNorms spatial_norms(const DGField<Dim>& field, const ReferenceOperators<Dim>& ops, const Mesh<Dim>& mesh,
                        const AngularQuadrature<Dim>& quad,
                        const std::type_identity_t<std::function<double(const Vec<Dim>&, const Vec<Dim>&, double)>>& exact, double t,
                        int subdivisions = 1) {
  const auto rule = refined_rule<Dim>(subdivisions);
  std::vector<LocalVector> phi;
  for (int q = 0; q < rule.size(); ++q) phi.push_back(ops.basis.values(rule.points[q]));
  StepNorms out;
  out.per_direction.assign(quad.count(), {});
  std::vector<double> l2sq(quad.count(), 0.0);
  for (int k = 0; k < mesh.num_elements(); ++k) {
    const Vec<Dim> x0 = mesh.vertex(k, 0);
    const Mat<Dim> jac = mesh.jacobian(k);
    const double vol = mesh.signed_volume(k);
    for (int q = 0; q < rule.size(); ++q) {
      const Vec<Dim> x = x0 + jac * rule.points[q];
      for (int m = 0; m < quad.count(); ++m) {
        const double e = std::abs(phi[q].dot(field.block(m, k)) - exact(x, quad.directions[m], t));
        auto& nm = out.per_direction[m];
        nm.l1 += vol * rule.weights[q] * e;
        l2sq[m] += vol * rule.weights[q] * e * e;
        nm.linf = std::max(nm.linf, e);
      }
    }
  }
  for (int m = 0; m < quad.count(); ++m) {
    auto& nm = out.per_direction[m];
    nm.l2 = std::sqrt(l2sq[m]);
    out.aggregate.l1 += quad.weights[m] * nm.l1;
    out.aggregate.l2 += quad.weights[m] * nm.l2;
    out.aggregate.linf = std::max(out.aggregate.linf, nm.linf);
  }
  return out;
}

/// Time integral of per-step norms by the right-endpoint rule: each step's
/// norm at t_{n+1} is weighted by its step length.
class GlobalNorms {
public:
  void add(const NormTriple& at_step_end, double dt) {
    total_.l1 += at_step_end.l1 * dt;
    total_.l2 += at_step_end.l2 * dt;
    total_.linf += at_step_end.linf * dt;
    ++steps_;
  }
  const NormTriple& value() const { return total_; }
  int steps() const { return steps_; }

private:
  NormTriple total_;
  int steps_ = 0;
};

/// Least-squares slope of log(error) against log(h) with h = N^(-1/dim).
inline double convergence_order(const std::vector<std::pair<int, double>>& samples, int dim) {
  if (samples.size() < 2) throw Error("convergence_order: need at least two samples");
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (const auto& [n, e] : samples) {
    if (!(e > 0.0) || n <= 0) throw Error("convergence_order: errors and element counts must be positive");
    const double x = -std::log(static_cast<double>(n)) / dim;
    const double y = std::log(e);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double k = static_cast<double>(samples.size());
  const double den = k * sxx - sx * sx;
  if (den == 0.0) throw Error("convergence_order: element counts must differ");
  return (k * sxy - sx * sy) / den;
}

}  // namespace rtmm
