#pragma once

#include "rtmm/angular_quadrature.hpp"
#include "rtmm/basis.hpp"
#include "rtmm/core.hpp"
#include "rtmm/dg.hpp"
#include "rtmm/mesh.hpp"
#include "rtmm/metric.hpp"

#include <openssl/evp.h>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

namespace rtmm {

namespace fs = std::filesystem;

/// Shortest decimal form that reads back to the same double.
inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string sha256_hex(const void* data, size_t size) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), data, size) != 1 || EVP_DigestFinal_ex(ctx.get(), md, &len) != 1)
    throw Error("sha256 failed");
  std::ostringstream os;
  for (unsigned i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read '" + p.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline std::string sha256_file(const fs::path& p) {
  const auto s = read_file(p);
  return sha256_hex(s.data(), s.size());
}

/// Writes to a sibling temporary and renames over the target.
inline void write_atomic(const fs::path& p, const std::string& content) {
  fs::path tmp = p;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw Error("write to '" + tmp.string() + "' failed");
  }
  fs::rename(tmp, p);
}

inline std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw Error("cannot write '" + p.string() + "'");
  return out;
}

/// Rows of `step,vertex_id,x,y` (y = 0 in 1D).
template <int Dim>
void write_vertex_rows(std::ostream& os, int step, const Mesh<Dim>& mesh) {
  for (int j = 0; j < mesh.num_vertices(); ++j) {
    os << step << ',' << j << ',' << fmt(mesh.x[j][0]) << ',';
    os << (Dim == 2 ? fmt(mesh.x[j][Dim - 1]) : std::string("0")) << '\n';
  }
}

inline void write_vertex_header(std::ostream& os) { os << "step,vertex_id,x,y\n"; }

/// 1D trajectory row `t,x_1,...,x_Nv`.
inline void write_trajectory_row(std::ostream& os, double t, const Mesh<1>& mesh) {
  os << fmt(t);
  for (const auto& x : mesh.x) os << ',' << fmt(x[0]);
  os << '\n';
}

template <int Dim>
void write_metric_csv(const fs::path& p, const std::vector<Mat<Dim>>& metric) {
  auto out = open_out(p);
  out << "element_id,m11,m12,m22,det\n";
  for (size_t k = 0; k < metric.size(); ++k) {
    const auto& m = metric[k];
    if constexpr (Dim == 1) {
      out << k << ',' << fmt(m(0, 0)) << ",0,0," << fmt(m(0, 0)) << '\n';
    } else {
      out << k << ',' << fmt(m(0, 0)) << ',' << fmt(m(0, 1)) << ',' << fmt(m(1, 1)) << ',' << fmt(m.determinant())
          << '\n';
    }
  }
}

/// Element averages of one direction.
template <int Dim>
std::vector<double> cell_means(const DGField<Dim>& field, const ReferenceOperators<Dim>& ops, int m) {
  double wsum = 0.0;
  LocalVector avg = LocalVector::Zero(field.modes);
  for (int q = 0; q < ops.vol.size(); ++q) {
    avg += ops.vol.weights[q] * ops.vol_phi[q];
    wsum += ops.vol.weights[q];
  }
  avg /= wsum;
  std::vector<double> out(field.elements);
  for (int k = 0; k < field.elements; ++k) out[k] = avg.dot(field.block(m, k));
  return out;
}

template <int Dim>
void write_mesh_vtk_header(std::ostream& os, const Mesh<Dim>& mesh, const std::string& title) {
  os << "# vtk DataFile Version 3.0\n" << title << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  os << "POINTS " << mesh.num_vertices() << " double\n";
  for (const auto& x : mesh.x) os << fmt(x[0]) << ' ' << (Dim == 2 ? fmt(x[Dim - 1]) : std::string("0")) << " 0\n";
  const int ne = mesh.num_elements();
  os << "CELLS " << ne << ' ' << ne * (Dim + 2) << '\n';
  for (const auto& e : mesh.topo->elements) {
    os << Dim + 1;
    for (int v : e) os << ' ' << v;
    os << '\n';
  }
  os << "CELL_TYPES " << ne << '\n';
  for (int k = 0; k < ne; ++k) os << (Dim == 1 ? 3 : 5) << '\n';  // VTK_LINE, VTK_TRIANGLE
}

template <int Dim>
void write_mesh_vtk(const fs::path& p, const Mesh<Dim>& mesh, const std::string& title) {
  auto out = open_out(p);
  write_mesh_vtk_header(out, mesh, title);
  out << "CELL_DATA " << mesh.num_elements() << "\nSCALARS area double 1\nLOOKUP_TABLE default\n";
  for (int k = 0; k < mesh.num_elements(); ++k) out << fmt(mesh.signed_volume(k)) << '\n';
}

/// Snapshot with per-cell means of I_m for the chosen directions and the
/// weighted angular mean.
template <int Dim>
void write_solution_vtk(const fs::path& p, const Mesh<Dim>& mesh, const DGField<Dim>& field,
                        const ReferenceOperators<Dim>& ops, const AngularQuadrature<Dim>& quad,
                        const std::vector<int>& directions, const std::string& title) {
  auto out = open_out(p);
  write_mesh_vtk_header(out, mesh, title);
  const int ne = mesh.num_elements();
  out << "CELL_DATA " << ne << '\n';
  std::vector<double> mean(ne, 0.0);
  for (int m = 0; m < quad.count(); ++m) {
    const auto v = cell_means(field, ops, m);
    for (int k = 0; k < ne; ++k) mean[k] += quad.weights[m] * v[k];
  }
  for (int m : directions) {
    if (m < 0 || m >= quad.count()) throw Error("snapshot direction " + std::to_string(m) + " out of range");
    const auto v = cell_means(field, ops, m);
    out << "SCALARS I_" << m << " double 1\nLOOKUP_TABLE default\n";
    for (double x : v) out << fmt(x) << '\n';
  }
  out << "SCALARS I_mean double 1\nLOOKUP_TABLE default\n";
  for (double x : mean) out << fmt(x) << '\n';
}

/// Everything needed to evaluate a stored solution without re-running.
template <int Dim>
struct Checkpoint {
  int step = 0;
  Mesh<Dim> mesh;
  DGField<Dim> field;
  AngularQuadrature<Dim> quad;
};

namespace detail {
constexpr char kCheckpointMagic[8] = {'R', 'T', 'M', 'M', 'C', 'K', 'P', '1'};

template <class T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <class T>
void put_vec(std::ostream& os, const std::vector<T>& v) {
  put<std::int64_t>(os, static_cast<std::int64_t>(v.size()));
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
}
template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw Error("truncated checkpoint");
  return v;
}
template <class T>
std::vector<T> get_vec(std::istream& is) {
  const auto n = get<std::int64_t>(is);
  if (n < 0 || n > (std::int64_t{1} << 34)) throw Error("corrupt checkpoint");
  std::vector<T> v(static_cast<size_t>(n));
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
  if (!is) throw Error("truncated checkpoint");
  return v;
}
}  // namespace detail

template <int Dim>
void write_checkpoint(const fs::path& p, int step, const Mesh<Dim>& mesh, const DGField<Dim>& field,
                      const AngularQuadrature<Dim>& quad) {
  using namespace detail;
  std::ostringstream os(std::ios::binary);
  os.write(kCheckpointMagic, sizeof kCheckpointMagic);
  put<std::int32_t>(os, Dim);
  put<std::int32_t>(os, step);
  put<double>(os, field.time);
  put<std::int32_t>(os, field.degree);
  for (int d = 0; d < Dim; ++d) put<double>(os, mesh.topo->domain.lo[d]);
  for (int d = 0; d < Dim; ++d) put<double>(os, mesh.topo->domain.hi[d]);
  std::vector<double> xs;
  for (const auto& x : mesh.x)
    for (int d = 0; d < Dim; ++d) xs.push_back(x[d]);
  put_vec(os, xs);
  std::vector<std::int32_t> conn;
  for (const auto& e : mesh.topo->elements)
    for (int v : e) conn.push_back(v);
  put_vec(os, conn);
  std::vector<double> dirs;
  for (const auto& d : quad.directions)
    for (int i = 0; i < Dim; ++i) dirs.push_back(d[i]);
  put_vec(os, dirs);
  put_vec(os, quad.weights);
  put_vec(os, field.coef);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  write_atomic(p, os.str());
}

template <int Dim>
Checkpoint<Dim> read_checkpoint(const fs::path& p) {
  using namespace detail;
  std::istringstream is(read_file(p), std::ios::binary);
  char magic[sizeof kCheckpointMagic];
  is.read(magic, sizeof magic);
  if (!is || !std::equal(magic, magic + sizeof magic, kCheckpointMagic))
    throw Error("'" + p.string() + "' is not a checkpoint");
  if (get<std::int32_t>(is) != Dim) throw Error("checkpoint dimension mismatch");
  Checkpoint<Dim> c;
  c.step = get<std::int32_t>(is);
  const double t = get<double>(is);
  const int degree = get<std::int32_t>(is);
  Box<Dim> dom;
  for (int d = 0; d < Dim; ++d) dom.lo[d] = get<double>(is);
  for (int d = 0; d < Dim; ++d) dom.hi[d] = get<double>(is);
  const auto xs = get_vec<double>(is);
  const auto conn = get_vec<std::int32_t>(is);
  const auto dirs = get_vec<double>(is);
  c.quad.weights = get_vec<double>(is);
  auto coef = get_vec<double>(is);
  if (xs.size() % Dim || conn.size() % (Dim + 1) || dirs.size() != c.quad.weights.size() * Dim)
    throw Error("corrupt checkpoint");
  std::vector<Vec<Dim>> x(xs.size() / Dim);
  for (size_t j = 0; j < x.size(); ++j)
    for (int d = 0; d < Dim; ++d) x[j][d] = xs[j * Dim + d];
  std::vector<typename Topology<Dim>::Element> elems(conn.size() / (Dim + 1));
  for (size_t k = 0; k < elems.size(); ++k)
    for (int i = 0; i <= Dim; ++i) {
      elems[k][i] = conn[k * (Dim + 1) + i];
      if (elems[k][i] < 0 || elems[k][i] >= static_cast<int>(x.size())) throw Error("corrupt checkpoint");
    }
  for (size_t m = 0; m < c.quad.weights.size(); ++m) {
    Vec<Dim> d;
    for (int i = 0; i < Dim; ++i) d[i] = dirs[m * Dim + i];
    c.quad.directions.push_back(d);
  }
  c.mesh.topo = make_topology<Dim>(dom, static_cast<int>(x.size()), std::move(elems), x);
  c.mesh.x = std::move(x);
  c.field = DGField<Dim>(degree, c.quad.count(), c.mesh.num_elements());
  if (coef.size() != c.field.coef.size()) throw Error("checkpoint coefficient count mismatch");
  c.field.coef = std::move(coef);
  c.field.time = t;
  return c;
}

}  // namespace rtmm
