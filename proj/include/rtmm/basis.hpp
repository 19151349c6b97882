#pragma once

#include "rtmm/core.hpp"
#include "rtmm/simplex_quadrature.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace rtmm {

/// Reference gradients of the basis, one column per mode.
template <int Dim>
using GradMatrix = Eigen::Matrix<double, Dim, Eigen::Dynamic, Dim == 1 ? Eigen::RowMajor : Eigen::ColMajor, Dim, kMaxModes>;

/// Orthonormal modal basis of total degree <= k on the reference simplex, with
/// respect to the volume-normalized measure: sum_q w_q phi_p phi_r = delta_pr.
/// Pulled back affinely, it gives int_K phi_p phi_r = |K| delta_pr on every
/// element, and phi_0 = 1. Because the pull-back follows the vertices, the
/// basis is transported with the mesh, which is what lets old-time
/// coefficients be reused on a moved element.
template <int Dim>
class ModalBasis {
public:
  explicit ModalBasis(int degree) : degree_(degree) {
    if (degree < 0 || degree > 2) throw Error("ModalBasis: degree must be 0, 1 or 2");
    n_ = num_modes(Dim, degree);
    const auto rule = volume_rule<Dim>();
    // Gram-Schmidt (modified, twice) of the monomials in the discrete inner product
    coef_ = LocalMatrix::Identity(n_, n_);
    auto inner = [&](const LocalVector& a, const LocalVector& b) {
      double s = 0.0;
      for (int q = 0; q < rule.size(); ++q) {
        const LocalVector mq = monomials(rule.points[q]);
        s += rule.weights[q] * mq.dot(a) * mq.dot(b);
      }
      return s;
    };
    for (int p = 0; p < n_; ++p) {
      LocalVector c = coef_.row(p).transpose();
      for (int pass = 0; pass < 2; ++pass)
        for (int r = 0; r < p; ++r) {
          const LocalVector cr = coef_.row(r).transpose();
          c -= inner(c, cr) * cr;
        }
      c /= std::sqrt(inner(c, c));
      coef_.row(p) = c.transpose();
    }
  }

  int degree() const { return degree_; }
  int size() const { return n_; }

  LocalVector monomials(const Vec<Dim>& r) const {
    LocalVector m(n_);
    if constexpr (Dim == 1) {
      for (int i = 0; i < n_; ++i) m[i] = std::pow(r[0], i);
    } else {
      const double x = r[0], y = r[1];
      m[0] = 1.0;
      if (n_ > 1) {
        m[1] = x;
        m[2] = y;
      }
      if (n_ > 3) {
        m[3] = x * x;
        m[4] = x * y;
        m[5] = y * y;
      }
    }
    return m;
  }

  /// Rows: reference derivative direction; columns: monomial.
  GradMatrix<Dim> monomial_gradients(const Vec<Dim>& r) const {
    GradMatrix<Dim> g(Dim, n_);
    g.setZero();
    if constexpr (Dim == 1) {
      for (int i = 1; i < n_; ++i) g(0, i) = i * std::pow(r[0], i - 1);
    } else {
      const double x = r[0], y = r[1];
      if (n_ > 1) {
        g(0, 1) = 1.0;
        g(1, 2) = 1.0;
      }
      if (n_ > 3) {
        g(0, 3) = 2.0 * x;
        g(0, 4) = y;
        g(1, 4) = x;
        g(1, 5) = 2.0 * y;
      }
    }
    return g;
  }

  LocalVector values(const Vec<Dim>& r) const { return coef_ * monomials(r); }

  /// Reference gradients: column p is grad_ref phi_p.
  GradMatrix<Dim> gradients(const Vec<Dim>& r) const {
    return monomial_gradients(r) * coef_.transpose();
  }

private:
  int degree_;
  int n_;
  LocalMatrix coef_;  // row p: monomial coefficients of phi_p
};

/// Tabulated reference integrals that make per-element assembly a few small
/// matrix sums. All integrals are over the reference simplex with the
/// volume-normalized measure, or over the unit-measure reference facet.
template <int Dim>
struct ReferenceOperators {
  static constexpr int kFacets = Dim + 1;

  ModalBasis<Dim> basis;
  SimplexRule<Dim> vol;
  FacetRule face;
  std::vector<LocalVector> vol_phi;  // per volume node
  std::vector<GradMatrix<Dim>> vol_grad;
  // grad_mass[e](q, p) = int (d phi_q / d r_e) phi_p
  std::array<LocalMatrix, Dim> grad_mass;
  // face_phi[f][s]: basis values at facet node s of facet f
  std::array<std::vector<LocalVector>, kFacets> face_phi;
  // face_mass[f](q, p) = int_f phi_q phi_p
  std::array<LocalMatrix, kFacets> face_mass;
  // cross[f][g](q, p) = int_f phi_q(r_f(s)) phi_p(r_g(1 - s)), neighbor seen through its facet g
  std::array<std::array<LocalMatrix, kFacets>, kFacets> cross;

  explicit ReferenceOperators(int degree)
      : basis(degree), vol(volume_rule<Dim>()), face(facet_rule<Dim>()) {
    const int n = basis.size();
    for (int q = 0; q < vol.size(); ++q) {
      vol_phi.push_back(basis.values(vol.points[q]));
      vol_grad.push_back(basis.gradients(vol.points[q]));
    }
    for (int e = 0; e < Dim; ++e) {
      grad_mass[e] = LocalMatrix::Zero(n, n);
      for (int q = 0; q < vol.size(); ++q)
        grad_mass[e] += vol.weights[q] * vol_grad[q].row(e).transpose() * vol_phi[q].transpose();
    }
    for (int f = 0; f < kFacets; ++f) {
      face_mass[f] = LocalMatrix::Zero(n, n);
      for (int s = 0; s < face.size(); ++s) {
        face_phi[f].push_back(basis.values(reference_facet_point<Dim>(f, face.params[s])));
        face_mass[f] += face.weights[s] * face_phi[f][s] * face_phi[f][s].transpose();
      }
    }
    for (int f = 0; f < kFacets; ++f)
      for (int g = 0; g < kFacets; ++g) {
        cross[f][g] = LocalMatrix::Zero(n, n);
        for (int s = 0; s < face.size(); ++s) {
          const LocalVector other = basis.values(reference_facet_point<Dim>(g, 1.0 - face.params[s]));
          cross[f][g] += face.weights[s] * face_phi[f][s] * other.transpose();
        }
      }
  }

  int modes() const { return basis.size(); }
};

}  // namespace rtmm
