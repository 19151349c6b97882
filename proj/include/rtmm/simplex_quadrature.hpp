#pragma once

#include "rtmm/angular_quadrature.hpp"
#include "rtmm/core.hpp"

#include <array>
#include <vector>

namespace rtmm {

/// Quadrature on the reference simplex: [0,1] in 1D, the unit right triangle
/// in 2D. Weights are fractions of the simplex volume (they sum to 1), so a
/// physical integral is |K| * sum_q w_q f(x_q).
template <int Dim>
struct SimplexRule {
  std::vector<Vec<Dim>> points;
  std::vector<double> weights;
  int size() const { return static_cast<int>(points.size()); }
};

/// Rule on a facet parametrized by s in [0,1] from its first vertex to its
/// second; weights sum to 1 (multiply by the facet measure). In 1D a facet
/// is a point and the rule is the single node s = 0.
struct FacetRule {
  std::vector<double> params;
  std::vector<double> weights;
  int size() const { return static_cast<int>(params.size()); }
};

inline SimplexRule<1> gauss_interval_rule(int n) {
  const auto gl = gauss_legendre(n);
  SimplexRule<1> rule;
  for (int i = 0; i < n; ++i) {
    rule.points.push_back(Vec<1>(0.5 * (gl.nodes[i] + 1.0)));
    rule.weights.push_back(0.5 * gl.weights[i]);
  }
  return rule;
}

/// 12-point symmetric rule exact for total degree 6 on the triangle.
inline SimplexRule<2> dunavant6_rule() {
  SimplexRule<2> rule;
  auto add3 = [&](double a, double b, double w) {
    const std::array<std::array<double, 3>, 3> bary{{{a, b, b}, {b, a, b}, {b, b, a}}};
    for (const auto& l : bary) {
      rule.points.push_back(Vec<2>(l[1], l[2]));
      rule.weights.push_back(w);
    }
  };
  auto add6 = [&](double a, double b, double c, double w) {
    const std::array<std::array<double, 3>, 6> bary{
        {{a, b, c}, {a, c, b}, {b, a, c}, {b, c, a}, {c, a, b}, {c, b, a}}};
    for (const auto& l : bary) {
      rule.points.push_back(Vec<2>(l[1], l[2]));
      rule.weights.push_back(w);
    }
  };
  add3(0.501426509658179, 0.249286745170910, 0.116786275726379);
  add3(0.873821971016996, 0.063089014491502, 0.050844906370207);
  add6(0.053145049844817, 0.310352451033784, 0.636502499121399, 0.082851075618374);
  return rule;
}

/// Default volume rule: exact for degree 7 in 1D and degree 6 in 2D, enough
/// for the 2k+2 products of P2 DG.
template <int Dim>
SimplexRule<Dim> volume_rule() {
  if constexpr (Dim == 1) {
    return gauss_interval_rule(4);
  } else {
    return dunavant6_rule();
  }
}

template <int Dim>
FacetRule facet_rule() {
  FacetRule rule;
  if constexpr (Dim == 1) {
    rule.params = {0.0};
    rule.weights = {1.0};
  } else {
    const auto gl = gauss_legendre(4);
    for (int i = 0; i < 4; ++i) {
      rule.params.push_back(0.5 * (gl.nodes[i] + 1.0));
      rule.weights.push_back(0.5 * gl.weights[i]);
    }
  }
  return rule;
}

/// Reference coordinates of vertex v of the reference simplex.
template <int Dim>
Vec<Dim> reference_vertex(int v) {
  Vec<Dim> p = Vec<Dim>::Zero();
  if (v > 0) p[v - 1] = 1.0;
  return p;
}

/// Local vertex indices spanning facet f (the facet opposite vertex f), in
/// the orientation that keeps the element on the left of the facet in 2D.
template <int Dim>
std::array<int, Dim> facet_vertices(int f) {
  if constexpr (Dim == 1) {
    return {f == 0 ? 1 : 0};
  } else {
    return {(f + 1) % 3, (f + 2) % 3};
  }
}

/// Reference point at parameter s on facet f.
template <int Dim>
Vec<Dim> reference_facet_point(int f, double s) {
  const auto fv = facet_vertices<Dim>(f);
  if constexpr (Dim == 1) {
    (void)s;
    return reference_vertex<1>(fv[0]);
  } else {
    return (1.0 - s) * reference_vertex<2>(fv[0]) + s * reference_vertex<2>(fv[1]);
  }
}

/// Composite rule: the base volume rule applied on each of the `subdivisions`^Dim
/// congruent sub-simplices of a uniform refinement.
template <int Dim>
SimplexRule<Dim> refined_rule(int subdivisions) {
  const auto base = volume_rule<Dim>();
  if (subdivisions <= 1) return base;
  const double h = 1.0 / subdivisions;
  SimplexRule<Dim> rule;
  auto push_sub = [&](const Vec<Dim>& origin, const Mat<Dim>& edges) {
    const double frac = std::abs(edges.determinant());  // fraction of the reference volume
    for (int q = 0; q < base.size(); ++q) {
      rule.points.push_back(origin + edges * base.points[q]);
      rule.weights.push_back(base.weights[q] * frac);
    }
  };
  if constexpr (Dim == 1) {
    for (int i = 0; i < subdivisions; ++i) push_sub(Vec<1>(i * h), Mat<1>(h));
  } else {
    for (int j = 0; j < subdivisions; ++j) {
      for (int i = 0; i + j < subdivisions; ++i) {
        Mat<2> up;
        up << h, 0.0, 0.0, h;
        push_sub(Vec<2>(i * h, j * h), up);
        if (i + j + 1 < subdivisions) {
          Mat<2> down;
          down << 0.0, -h, h, h;  // columns: (i+1,j+1)-(i+1,j), (i,j+1)-(i+1,j)
          push_sub(Vec<2>((i + 1) * h, j * h), down);
        }
      }
    }
  }
  return rule;
}

}  // namespace rtmm
