#pragma once

#include "rtmm/basis.hpp"
#include "rtmm/core.hpp"
#include "rtmm/dg.hpp"
#include "rtmm/mesh.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

namespace rtmm {

/// Q diag(|lambda|) Q^T of a symmetric matrix.
template <int Dim>
Mat<Dim> abs_matrix(const Mat<Dim>& h) {
  Eigen::SelfAdjointEigenSolver<Mat<Dim>> es(0.5 * (h + h.transpose()));
  return es.eigenvectors() * es.eigenvalues().cwiseAbs().asDiagonal() * es.eigenvectors().transpose();
}

template <int Dim>
bool is_spd(const Mat<Dim>& a) {
  if (!a.allFinite() || (a - a.transpose()).cwiseAbs().maxCoeff() > 1e-10 * a.cwiseAbs().maxCoeff()) return false;
  return a.trace() > 0.0 && a.determinant() > 0.0;
}

/// Exponent e with det(M)^(1/2) = det(I + |H|/alpha)^e for the metric below.
template <int Dim>
constexpr double metric_det_exponent() {
  return 2.0 / (Dim + 4.0);
}

/// det(B)^(-1/(d+4)) B with B = I + |H|/alpha: the L2-optimal metric for
/// linear interpolation; in 2D the exponent is -1/6.
/// A positive `ceiling` caps the eigenvalues of |H|/alpha; at a discontinuity the
/// recovered Hessian grows like h^-2, and without a cap each adaptation step
/// compresses the mesh further.
template <int Dim>
Mat<Dim> metric_from_hessian(const Mat<Dim>& abs_h, double alpha, double ceiling = 0.0) {
  if (!(alpha > 0.0)) throw Error("metric_from_hessian: alpha must be positive");
  Mat<Dim> scaled = abs_h / alpha;
  if (ceiling > 0.0) {
    Eigen::SelfAdjointEigenSolver<Mat<Dim>> es(0.5 * (scaled + scaled.transpose()));
    scaled = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseMin(ceiling).asDiagonal() *
             es.eigenvectors().transpose();
  }
  const Mat<Dim> b = Mat<Dim>::Identity() + scaled;
  return std::pow(b.determinant(), -1.0 / (Dim + 4.0)) * b;
}

struct AlphaSolution {
  double alpha = 1.0;
  bool clamped = false;  // no root: near-zero curvature everywhere
  double residual = 0.0;  // |lhs - rhs| / rhs at the returned alpha
  int iterations = 0;
};

/// Solves sum |K| det(M_K(alpha))^(1/2) = 2 sum |K| det(|H_K|)^(2/(d+4)) for alpha
/// by bisection in log(alpha) on [1e-12, 1e12].
template <int Dim>
AlphaSolution solve_alpha(const std::vector<Mat<Dim>>& abs_h, const std::vector<double>& volumes,
                          double rel_tol = 1e-10, int max_iter = 200) {
  if (abs_h.empty() || abs_h.size() != volumes.size()) throw Error("solve_alpha: need one Hessian per element");
  const double e = metric_det_exponent<Dim>();
  double domain = 0.0, rhs = 0.0;
  std::vector<Mat<Dim>> sym(abs_h.size());
  for (size_t k = 0; k < abs_h.size(); ++k) {
    domain += volumes[k];
    rhs += volumes[k] * std::pow(std::max(0.0, abs_h[k].determinant()), e);
  }
  rhs *= 2.0;
  AlphaSolution sol;
  if (!(rhs > domain)) {
    sol.clamped = true;
    return sol;
  }
  auto lhs = [&](double alpha) {
    double s = 0.0;
    for (size_t k = 0; k < abs_h.size(); ++k)
      s += volumes[k] * std::pow((Mat<Dim>::Identity() + abs_h[k] / alpha).determinant(), e);
    return s;
  };
  double lo = std::log(1e-12), hi = std::log(1e12);
  if (lhs(std::exp(hi)) > rhs) {
    sol.alpha = std::exp(hi);
  } else if (lhs(std::exp(lo)) < rhs) {
    sol.alpha = std::exp(lo);
  } else {
    for (sol.iterations = 0; sol.iterations < max_iter && hi - lo > rel_tol; ++sol.iterations) {
      const double mid = 0.5 * (lo + hi);
      if (lhs(std::exp(mid)) > rhs) lo = mid;
      else hi = mid;
    }
    sol.alpha = std::exp(0.5 * (lo + hi));
  }
  sol.residual = std::abs(lhs(sol.alpha) - rhs) / rhs;
  return sol;
}

/// A intersect B: with P A P^T = I and P B P^T = diag(b), returns
/// P^{-1} diag(max(1, b)) P^{-T}. P is built from the Cholesky factor of A and
/// the eigenvectors of L^{-1} B L^{-T}.
template <int Dim>
Mat<Dim> intersect(const Mat<Dim>& a, const Mat<Dim>& b) {
  if (!is_spd(a) || !is_spd(b)) throw Error("intersect: inputs must be symmetric positive definite");
  Eigen::LLT<Mat<Dim>> llt(a);
  const Mat<Dim> l = llt.matrixL();
  const Mat<Dim> linv = l.inverse();
  const Mat<Dim> c = linv * b * linv.transpose();
  Eigen::SelfAdjointEigenSolver<Mat<Dim>> es(0.5 * (c + c.transpose()));
  const Mat<Dim> lq = l * es.eigenvectors();
  const Mat<Dim> r = lq * es.eigenvalues().cwiseMax(1.0).asDiagonal() * lq.transpose();
  return 0.5 * (r + r.transpose());
}

/// Least-squares quadratic fit of element-centroid values over each element's
/// two-ring face-neighbor patch. The fit operator depends only on the mesh, so
/// it is built once and applied to every direction.
template <int Dim>
class HessianRecovery {
public:
  static constexpr int kUnknowns = Dim == 1 ? 3 : 6;

  HessianRecovery(const Mesh<Dim>& mesh, const ReferenceOperators<Dim>& ops) {
    const auto& topo = *mesh.topo;
    const int n = mesh.num_elements();
    centroid_phi_ = ops.basis.values(Vec<Dim>::Constant(1.0 / (Dim + 1)));
    for (int i = 0; i <= Dim; ++i) vertex_phi_.push_back(ops.basis.values(reference_vertex<Dim>(i)));
    samples_.resize(n);
    fit_.resize(n);
    scale_.resize(n);
    flagged_.assign(n, 0);
    for (int k = 0; k < n; ++k) {
      std::set<int> ring{k};
      for (int f = 0; f <= Dim; ++f) {
        const int nb = topo.neighbor[k][f];
        if (nb < 0) continue;
        ring.insert(nb);
        for (int g = 0; g <= Dim; ++g)
          if (topo.neighbor[nb][g] >= 0) ring.insert(topo.neighbor[nb][g]);
      }
      const Vec<Dim> ck = mesh.centroid(k);
      const double h = std::pow(mesh.signed_volume(k), 1.0 / Dim);
      scale_[k] = h;
      std::vector<Sample> s;
      for (int e : ring) s.push_back({e, -1, (mesh.centroid(e) - ck) / h});
      bool ok = build_fit(k, s);
      if (!ok) {
        // boundary patches: add the polynomial traces at the vertices of the one-ring
        std::set<int> one{k};
        for (int f = 0; f <= Dim; ++f)
          if (topo.neighbor[k][f] >= 0) one.insert(topo.neighbor[k][f]);
        for (int e : one)
          for (int i = 0; i <= Dim; ++i) s.push_back({e, i, (mesh.vertex(e, i) - ck) / h});
        ok = build_fit(k, s);
      }
      if (!ok) flagged_[k] = 1;
      samples_[k] = std::move(s);
    }
  }

  /// Per-element Hessian of direction m of the field; flagged elements get zero.
  std::vector<Mat<Dim>> recover(const DGField<Dim>& field, int m) const {
    const int n = field.elements;
    std::vector<Mat<Dim>> h(n, Mat<Dim>::Zero());
    for (int k = 0; k < n; ++k) {
      if (flagged_[k]) continue;
      const auto& s = samples_[k];
      Eigen::VectorXd v(s.size());
      for (size_t i = 0; i < s.size(); ++i) {
        const auto blk = field.block(m, s[i].element);
        v[i] = s[i].vertex < 0 ? centroid_phi_.dot(blk) : vertex_phi_[s[i].vertex].dot(blk);
      }
      const Eigen::VectorXd a = fit_[k] * v;
      const double h2 = scale_[k] * scale_[k];
      if constexpr (Dim == 1) {
        h[k](0, 0) = 2.0 * a[2] / h2;
      } else {
        h[k] << 2.0 * a[3] / h2, a[4] / h2, a[4] / h2, 2.0 * a[5] / h2;
      }
    }
    return h;
  }

  int flagged_count() const { return static_cast<int>(std::count(flagged_.begin(), flagged_.end(), 1)); }
  bool flagged(int k) const { return flagged_[k] != 0; }

private:
  struct Sample {
    int element;
    int vertex;  // -1: centroid value
    Vec<Dim> u;  // scaled offset from the element centroid
  };

  bool build_fit(int k, const std::vector<Sample>& s) {
    if (static_cast<int>(s.size()) < kUnknowns) return false;
    Eigen::MatrixXd a(s.size(), kUnknowns);
    for (size_t i = 0; i < s.size(); ++i) {
      const auto& u = s[i].u;
      if constexpr (Dim == 1) {
        a.row(i) << 1.0, u[0], u[0] * u[0];
      } else {
        a.row(i) << 1.0, u[0], u[1], u[0] * u[0], u[0] * u[1], u[1] * u[1];
      }
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    if (sv[kUnknowns - 1] <= 1e-8 * sv[0]) return false;
    fit_[k] = svd.matrixV() * sv.cwiseInverse().asDiagonal() * svd.matrixU().transpose();
    return true;
  }

  LocalVector centroid_phi_;
  std::vector<LocalVector> vertex_phi_;
  std::vector<std::vector<Sample>> samples_;
  std::vector<Eigen::MatrixXd> fit_;
  std::vector<double> scale_;
  std::vector<char> flagged_;
};

template <int Dim>
struct MetricField {
  std::vector<Mat<Dim>> tensor;
  std::vector<AlphaSolution> alphas;  // one per direction
  int hessian_flagged = 0;
};

/// Left fold of intersect over the per-direction metrics, element by element.
template <int Dim>
std::vector<Mat<Dim>> combine_directions(const std::vector<std::vector<Mat<Dim>>>& per_direction) {
  if (per_direction.empty()) throw Error("combine_directions: no metrics");
  std::vector<Mat<Dim>> out = per_direction.front();
  for (size_t m = 1; m < per_direction.size(); ++m)
    for (size_t k = 0; k < out.size(); ++k) out[k] = intersect<Dim>(out[k], per_direction[m][k]);
  return out;
}

/// Each pass replaces every tensor by the average over the element and its face neighbors.
template <int Dim>
std::vector<Mat<Dim>> smooth_metric(const std::vector<Mat<Dim>>& metric, const Mesh<Dim>& mesh, int passes) {
  const auto& topo = *mesh.topo;
  std::vector<Mat<Dim>> cur = metric, next(metric.size());
  for (int p = 0; p < passes; ++p) {
    for (int k = 0; k < mesh.num_elements(); ++k) {
      Mat<Dim> s = cur[k];
      int cnt = 1;
      for (int f = 0; f <= Dim; ++f) {
        const int nb = topo.neighbor[k][f];
        if (nb < 0) continue;
        s += cur[nb];
        ++cnt;
      }
      next[k] = s / cnt;
    }
    std::swap(cur, next);
  }
  return cur;
}

/// Metric for mesh adaptation from every direction of the field at the current time.
template <int Dim>
MetricField<Dim> build_metric(const DGField<Dim>& field, const Mesh<Dim>& mesh, const HessianRecovery<Dim>& recovery,
                              int smoothing_passes, double ceiling = 0.0) {
  MetricField<Dim> out;
  std::vector<double> vol(mesh.num_elements());
  for (int k = 0; k < mesh.num_elements(); ++k) vol[k] = mesh.signed_volume(k);
  std::vector<Mat<Dim>> combined;
  for (int m = 0; m < field.directions; ++m) {
    auto h = recovery.recover(field, m);
    for (auto& x : h) x = abs_matrix<Dim>(x);
    const auto alpha = solve_alpha<Dim>(h, vol);
    out.alphas.push_back(alpha);
    std::vector<Mat<Dim>> mk(h.size());
    for (size_t k = 0; k < h.size(); ++k) mk[k] = metric_from_hessian<Dim>(h[k], alpha.alpha, ceiling);
    if (m == 0) {
      combined = std::move(mk);
    } else {
      for (size_t k = 0; k < combined.size(); ++k) combined[k] = intersect<Dim>(combined[k], mk[k]);
    }
  }
  out.tensor = smooth_metric<Dim>(combined, mesh, smoothing_passes);
  out.hessian_flagged = recovery.flagged_count();
  return out;
}

}  // namespace rtmm
