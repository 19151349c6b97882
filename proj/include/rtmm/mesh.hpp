#pragma once

#include "rtmm/core.hpp"
#include "rtmm/simplex_quadrature.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace rtmm {

/// Axis-aligned interval (1D) or rectangle (2D).
template <int Dim>
struct Box {
  Vec<Dim> lo;
  Vec<Dim> hi;

  double measure() const { return (hi - lo).prod(); }
  bool contains(const Vec<Dim>& p, double tol = 1e-12) const {
    return ((p - lo).array() >= -tol).all() && ((hi - p).array() >= -tol).all();
  }
};

enum class VertexKind { interior, boundary, corner };

/// Connectivity shared by every mesh in a run. Immutable once built.
template <int Dim>
struct Topology {
  static constexpr int kVerts = Dim + 1;
  using Element = std::array<int, kVerts>;

  Box<Dim> domain;
  int num_vertices = 0;
  std::vector<Element> elements;
  // per element and local facet f (opposite local vertex f): neighbor element or -1
  std::vector<std::array<int, kVerts>> neighbor;
  // local facet index of the shared facet as seen from the neighbor
  std::vector<std::array<int, kVerts>> neighbor_facet;
  std::vector<std::vector<int>> vertex_patch;
  std::vector<VertexKind> vertex_kind;
  std::vector<Vec<Dim>> vertex_tangent;  // unit tangent for sliding boundary vertices

  int num_elements() const { return static_cast<int>(elements.size()); }
};

/// Build neighbor tables, vertex patches and boundary classes from an element list.
/// Boundary vertices are classified against the domain box: a vertex on two box
/// faces is a corner, on one face it slides along that face.
template <int Dim>
std::shared_ptr<const Topology<Dim>> make_topology(Box<Dim> domain, int num_vertices,
                                                   std::vector<typename Topology<Dim>::Element> elements,
                                                   const std::vector<Vec<Dim>>& coords) {
  auto topo = std::make_shared<Topology<Dim>>();
  constexpr int nv = Dim + 1;
  topo->domain = domain;
  topo->num_vertices = num_vertices;
  topo->elements = std::move(elements);
  const int ne = topo->num_elements();
  topo->neighbor.assign(ne, {});
  topo->neighbor_facet.assign(ne, {});
  for (auto& a : topo->neighbor) a.fill(-1);
  for (auto& a : topo->neighbor_facet) a.fill(-1);

  std::map<std::array<int, Dim>, std::pair<int, int>> open;
  for (int k = 0; k < ne; ++k) {
    for (int f = 0; f < nv; ++f) {
      const auto lv = facet_vertices<Dim>(f);
      std::array<int, Dim> key;
      for (int i = 0; i < Dim; ++i) key[i] = topo->elements[k][lv[i]];
      std::sort(key.begin(), key.end());
      auto it = open.find(key);
      if (it == open.end()) {
        open.emplace(key, std::make_pair(k, f));
      } else {
        const auto [k2, f2] = it->second;
        topo->neighbor[k][f] = k2;
        topo->neighbor_facet[k][f] = f2;
        topo->neighbor[k2][f2] = k;
        topo->neighbor_facet[k2][f2] = f;
        open.erase(it);
      }
    }
  }

  topo->vertex_patch.assign(num_vertices, {});
  for (int k = 0; k < ne; ++k)
    for (int v : topo->elements[k]) topo->vertex_patch[v].push_back(k);

  topo->vertex_kind.assign(num_vertices, VertexKind::interior);
  topo->vertex_tangent.assign(num_vertices, Vec<Dim>::Zero());
  const double scale = (domain.hi - domain.lo).maxCoeff();
  for (int v = 0; v < num_vertices; ++v) {
    int faces = 0;
    int axis = -1;
    for (int d = 0; d < Dim; ++d) {
      const bool on = std::abs(coords[v][d] - domain.lo[d]) <= 1e-12 * scale ||
                      std::abs(coords[v][d] - domain.hi[d]) <= 1e-12 * scale;
      if (on) {
        ++faces;
        axis = d;
      }
    }
    if (faces == 0) continue;
    if (Dim == 1 || faces >= 2) {
      topo->vertex_kind[v] = VertexKind::corner;
    } else {
      topo->vertex_kind[v] = VertexKind::boundary;
      Vec<Dim> t = Vec<Dim>::Zero();
      t[(axis + 1) % Dim] = 1.0;
      topo->vertex_tangent[v] = t;
    }
  }
  return topo;
}

/// A simplicial mesh: shared connectivity plus its own vertex coordinates.
template <int Dim>
struct Mesh {
  std::shared_ptr<const Topology<Dim>> topo;
  std::vector<Vec<Dim>> x;

  int num_elements() const { return topo->num_elements(); }
  int num_vertices() const { return topo->num_vertices; }
  const Box<Dim>& domain() const { return topo->domain; }

  Vec<Dim> vertex(int k, int i) const { return x[topo->elements[k][i]]; }

  /// Columns are the edge vectors x_i - x_0, i = 1..Dim.
  Mat<Dim> jacobian(int k) const {
    Mat<Dim> e;
    const Vec<Dim> x0 = vertex(k, 0);
    for (int i = 0; i < Dim; ++i) e.col(i) = vertex(k, i + 1) - x0;
    return e;
  }

  double signed_volume(int k) const {
    return jacobian(k).determinant() / (Dim == 1 ? 1.0 : 2.0);
  }

  Vec<Dim> centroid(int k) const {
    Vec<Dim> c = Vec<Dim>::Zero();
    for (int i = 0; i <= Dim; ++i) c += vertex(k, i);
    return c / (Dim + 1);
  }

  Vec<Dim> map_point(int k, const Vec<Dim>& ref) const { return vertex(k, 0) + jacobian(k) * ref; }

  /// Outward unit normal and measure of local facet f.
  std::pair<Vec<Dim>, double> facet_normal(int k, int f) const {
    if constexpr (Dim == 1) {
      const double s = x[topo->elements[k][1]][0] >= x[topo->elements[k][0]][0] ? 1.0 : -1.0;
      return {Vec<1>(f == 0 ? s : -s), 1.0};
    } else {
      const auto lv = facet_vertices<2>(f);
      const Vec<2> d = vertex(k, lv[1]) - vertex(k, lv[0]);
      const double len = d.norm();
      return {Vec<2>(d[1], -d[0]) / len, len};
    }
  }

  double total_volume() const {
    double s = 0.0;
    for (int k = 0; k < num_elements(); ++k) s += signed_volume(k);
    return s;
  }

  /// Smallest element diameter proxy: (volume)^(1/Dim) of the smallest element.
  double min_volume() const {
    double m = std::numeric_limits<double>::infinity();
    for (int k = 0; k < num_elements(); ++k) m = std::min(m, signed_volume(k));
    return m;
  }
};

template <int Dim>
Mesh<Dim> build_uniform(const Box<Dim>& domain, int n) {
  if (n < 1) throw Error("build_uniform: subdivision count must be >= 1");
  if (!((domain.hi - domain.lo).array() > 0.0).all()) throw Error("build_uniform: degenerate domain");
  std::vector<Vec<Dim>> x;
  std::vector<typename Topology<Dim>::Element> elems;
  if constexpr (Dim == 1) {
    for (int i = 0; i <= n; ++i) x.push_back(Vec<1>(domain.lo[0] + (domain.hi[0] - domain.lo[0]) * i / n));
    x.front() = domain.lo;
    x.back() = domain.hi;
    for (int i = 0; i < n; ++i) elems.push_back({i, i + 1});
  } else {
    const Vec<2> h = (domain.hi - domain.lo) / n;
    for (int j = 0; j <= n; ++j)
      for (int i = 0; i <= n; ++i) {
        Vec<2> p(domain.lo[0] + h[0] * i, domain.lo[1] + h[1] * j);
        if (i == n) p[0] = domain.hi[0];
        if (j == n) p[1] = domain.hi[1];
        x.push_back(p);
      }
    auto id = [n](int i, int j) { return j * (n + 1) + i; };
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        elems.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
        elems.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
      }
  }
  const int nv = static_cast<int>(x.size());
  Mesh<Dim> mesh;
  mesh.topo = make_topology<Dim>(domain, nv, std::move(elems), x);
  mesh.x = std::move(x);
  return mesh;
}

/// Number of subdivisions per axis that gives at least `elements` elements.
template <int Dim>
int subdivisions_for(int elements) {
  if constexpr (Dim == 1) {
    return elements;
  } else {
    return static_cast<int>(std::ceil(std::sqrt(elements / 2.0) - 1e-12));
  }
}

struct ValidationReport {
  enum class Kind { ok, nonpositive_volume, nonfinite_vertex, coverage, connectivity };
  Kind kind = Kind::ok;
  int element = -1;
  std::string message;

  bool ok() const { return kind == Kind::ok; }
};

template <int Dim>
ValidationReport validate(const Mesh<Dim>& mesh, double rel_tol = 1e-10) {
  ValidationReport r;
  const auto& topo = *mesh.topo;
  if (static_cast<int>(mesh.x.size()) != topo.num_vertices) {
    return {ValidationReport::Kind::connectivity, -1, "vertex count does not match topology"};
  }
  for (int k = 0; k < topo.num_elements(); ++k) {
    for (int v : topo.elements[k]) {
      if (v < 0 || v >= topo.num_vertices)
        return {ValidationReport::Kind::connectivity, k, "element references a missing vertex"};
      if (!mesh.x[v].allFinite())
        return {ValidationReport::Kind::nonfinite_vertex, k, "non-finite vertex coordinate"};
    }
    const double vol = mesh.signed_volume(k);
    if (!(vol > 0.0))
      return {ValidationReport::Kind::nonpositive_volume, k,
              "element " + std::to_string(k) + " has non-positive volume " + std::to_string(vol)};
  }
  const double dom = topo.domain.measure();
  if (std::abs(mesh.total_volume() - dom) > rel_tol * dom)
    return {ValidationReport::Kind::coverage, -1, "element volumes do not sum to the domain measure"};
  return r;
}

template <int Dim>
void require_valid(const Mesh<Dim>& mesh, const std::string& context) {
  const auto r = validate(mesh);
  if (!r.ok()) throw MeshError(context + ": " + r.message, r.element);
}

/// Vertex trajectories on one time slab, linear in time.
template <int Dim>
struct MovingMesh {
  Mesh<Dim> old_mesh;
  Mesh<Dim> new_mesh;
  double dt = 0.0;

  Vec<Dim> velocity(int v) const { return (new_mesh.x[v] - old_mesh.x[v]) / dt; }

  std::vector<Vec<Dim>> velocities() const {
    std::vector<Vec<Dim>> w(old_mesh.num_vertices());
    for (int v = 0; v < old_mesh.num_vertices(); ++v) w[v] = velocity(v);
    return w;
  }

  /// Positions at local time s in [0, dt] measured from t_n.
  Mesh<Dim> at(double s) const {
    if (s < -1e-14 * dt || s > dt * (1.0 + 1e-14)) throw Error("MovingMesh::at: time outside the slab");
    Mesh<Dim> m{old_mesh.topo, old_mesh.x};
    const double theta = dt > 0.0 ? s / dt : 0.0;
    for (int v = 0; v < m.num_vertices(); ++v) m.x[v] = (1.0 - theta) * old_mesh.x[v] + theta * new_mesh.x[v];
    return m;
  }

  /// Element volume is a polynomial of degree Dim in time; check both ends and any
  /// interior extremum of the 2D quadratic.
  ValidationReport validate_slab() const {
    auto r = validate(old_mesh);
    if (!r.ok()) return r;
    r = validate(new_mesh);
    if (!r.ok()) return r;
    if constexpr (Dim == 2) {
      const Mesh<Dim> mid = at(0.5 * dt);
      for (int k = 0; k < old_mesh.num_elements(); ++k) {
        const double a0 = old_mesh.signed_volume(k);
        const double a1 = new_mesh.signed_volume(k);
        const double am = mid.signed_volume(k);
        // A(theta) = a0 + b theta + c theta^2 through the three samples
        const double c = 2.0 * (a0 + a1 - 2.0 * am);
        const double b = a1 - a0 - c;
        if (c > 0.0) {
          const double th = -b / (2.0 * c);
          if (th > 0.0 && th < 1.0 && a0 + b * th + c * th * th <= 0.0)
            return {ValidationReport::Kind::nonpositive_volume, k,
                    "element " + std::to_string(k) + " degenerates inside the time slab"};
        }
      }
    }
    return r;
  }
};

/// Barycentric coordinates of p with respect to element k.
template <int Dim>
std::array<double, Dim + 1> barycentric(const Mesh<Dim>& mesh, int k, const Vec<Dim>& p) {
  const Vec<Dim> ref = mesh.jacobian(k).inverse() * (p - mesh.vertex(k, 0));
  std::array<double, Dim + 1> l;
  l[0] = 1.0 - ref.sum();
  for (int i = 0; i < Dim; ++i) l[i + 1] = ref[i];
  return l;
}

/// Uniform-bin point locator over element bounding boxes.
template <int Dim>
class PointLocator {
public:
  explicit PointLocator(const Mesh<Dim>& mesh) : mesh_(&mesh) {
    const auto& dom = mesh.domain();
    const int ne = mesh.num_elements();
    bins_ = std::max(1, static_cast<int>(std::pow(static_cast<double>(ne), 1.0 / Dim)));
    lo_ = dom.lo;
    width_ = (dom.hi - dom.lo) / bins_;
    int total = 1;
    for (int d = 0; d < Dim; ++d) total *= bins_;
    cells_.assign(total, {});
    for (int k = 0; k < ne; ++k) {
      Vec<Dim> bmin = mesh.vertex(k, 0), bmax = mesh.vertex(k, 0);
      for (int i = 1; i <= Dim; ++i) {
        bmin = bmin.cwiseMin(mesh.vertex(k, i));
        bmax = bmax.cwiseMax(mesh.vertex(k, i));
      }
      std::array<int, Dim> a, b;
      for (int d = 0; d < Dim; ++d) {
        a[d] = clamp_bin((bmin[d] - lo_[d]) / width_[d]);
        b[d] = clamp_bin((bmax[d] - lo_[d]) / width_[d]);
      }
      if constexpr (Dim == 1) {
        for (int i = a[0]; i <= b[0]; ++i) cells_[i].push_back(k);
      } else {
        for (int j = a[1]; j <= b[1]; ++j)
          for (int i = a[0]; i <= b[0]; ++i) cells_[j * bins_ + i].push_back(k);
      }
    }
  }

  /// Element containing p (barycentric tolerance `tol`), falling back to the
  /// element with the least negative barycentric coordinate among the
  /// candidates, then to a full scan. Returns -1 if p is farther than
  /// `reject_tol` (in barycentric units) from every element.
  int locate(const Vec<Dim>& p, double tol = 1e-12, double reject_tol = 1e-6) const {
    int best = -1;
    double best_min = -std::numeric_limits<double>::infinity();
    auto test = [&](int k) {
      const auto l = barycentric(*mesh_, k, p);
      const double m = *std::min_element(l.begin(), l.end());
      if (m > best_min) {
        best_min = m;
        best = k;
      }
      return m >= -tol;
    };
    for (int k : cells_[bin_of(p)])
      if (test(k)) return k;
    if (best_min < -reject_tol) {
      for (int k = 0; k < mesh_->num_elements(); ++k)
        if (test(k)) return k;
    }
    return best_min >= -reject_tol ? best : -1;
  }

private:
  int clamp_bin(double v) const { return std::clamp(static_cast<int>(std::floor(v)), 0, bins_ - 1); }
  int bin_of(const Vec<Dim>& p) const {
    int idx = 0;
    for (int d = Dim - 1; d >= 0; --d) idx = idx * bins_ + clamp_bin((p[d] - lo_[d]) / width_[d]);
    return idx;
  }

  const Mesh<Dim>* mesh_;
  int bins_ = 1;
  Vec<Dim> lo_, width_;
  std::vector<std::vector<int>> cells_;
};

}  // namespace rtmm
