#pragma once

#include "rtmm/core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <utility>
#include <vector>

namespace rtmm {

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1], nodes
/// ascending, weights summing to 2. Roots are found by Newton iteration from
/// Chebyshev-like initial guesses.
struct GaussLegendre {
  std::vector<double> nodes;
  std::vector<double> weights;
};

namespace detail {

/// P_n(x) and P_n'(x) via the three-term recurrence.
inline std::pair<double, double> legendre_with_derivative(int n, double x) {
  double p0 = 1.0, p1 = x;
  for (int k = 2; k <= n; ++k) {
    const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
    p0 = p1;
    p1 = pk;
  }
  const double pn = p1;
  const double pnm1 = n == 1 ? 1.0 : p0;
  return {pn, n * (x * pn - pnm1) / (x * x - 1.0)};
}

}  // namespace detail

inline GaussLegendre gauss_legendre(int n) {
  if (n < 1) throw Error("gauss_legendre: order must be >= 1");
  GaussLegendre rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    for (int it = 0; it < 100; ++it) {
      const auto [pn, dpn] = detail::legendre_with_derivative(n, x);
      const double dx = pn / dpn;
      x -= dx;
      if (std::abs(dx) <= 1e-15) break;
    }
    const double dp = detail::legendre_with_derivative(n, x).second;
    rule.nodes[i] = x;
    rule.weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) { return rule.nodes[a] < rule.nodes[b]; });
  GaussLegendre sorted;
  for (int i : idx) {
    sorted.nodes.push_back(rule.nodes[i]);
    sorted.weights.push_back(rule.weights[i]);
  }
  // exact zero for the middle node of odd rules
  if (n % 2 == 1) sorted.nodes[n / 2] = 0.0;
  return sorted;
}

/// Discrete-ordinate directions with weights normalized so that
/// sum_m w_m f(Omega_m) approximates (1/4pi) * integral of f over the sphere.
///
/// In 1D a direction is the cosine mu; in 2D it is the in-plane projection
/// (zeta, eta). The 2D rule also keeps the polar cosine and azimuth of each
/// node for diagnostics.
template <int Dim>
struct AngularQuadrature {
  std::vector<Vec<Dim>> directions;
  std::vector<double> weights;
  std::vector<double> mu;   // polar cosine per direction (1D: the direction itself)
  std::vector<double> phi;  // azimuth per direction (2D product rules only)

  int count() const { return static_cast<int>(directions.size()); }
};

inline AngularQuadrature<1> gauss_legendre_1d(int order) {
  const auto gl = gauss_legendre(order);
  AngularQuadrature<1> q;
  for (int i = 0; i < order; ++i) {
    q.directions.push_back(Vec<1>(gl.nodes[i]));
    q.weights.push_back(0.5 * gl.weights[i]);
    q.mu.push_back(gl.nodes[i]);
  }
  return q;
}

/// Product rule: Legendre roots in mu, n_azimuthal equally spaced Chebyshev
/// angles phi_j = (2j-1) pi / n_azimuthal over the full circle.
inline AngularQuadrature<2> legendre_chebyshev_2d(int n_polar, int n_azimuthal) {
  if (n_azimuthal < 1) throw Error("legendre_chebyshev_2d: n_azimuthal must be >= 1");
  const auto gl = gauss_legendre(n_polar);
  AngularQuadrature<2> q;
  for (int i = 0; i < n_polar; ++i) {
    const double mu = gl.nodes[i];
    const double s = std::sqrt(std::max(0.0, 1.0 - mu * mu));
    for (int j = 1; j <= n_azimuthal; ++j) {
      const double phi = (2.0 * j - 1.0) * std::numbers::pi / n_azimuthal;
      q.directions.push_back(Vec<2>(s * std::cos(phi), s * std::sin(phi)));
      q.weights.push_back(0.5 * gl.weights[i] / n_azimuthal);
      q.mu.push_back(mu);
      q.phi.push_back(phi);
    }
  }
  return q;
}

/// A single prescribed direction with unit weight (transparent / purely
/// absorbing problems that carry no scattering integral).
template <int Dim>
AngularQuadrature<Dim> single_direction(const Vec<Dim>& direction) {
  AngularQuadrature<Dim> q;
  q.directions.push_back(direction);
  q.weights.push_back(1.0);
  q.mu.push_back(Dim == 1 ? direction[0] : 0.0);
  return q;
}

}  // namespace rtmm
