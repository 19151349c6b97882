#pragma once

#include <Eigen/Core>
#include <Eigen/LU>

#include <stdexcept>
#include <string>

namespace rtmm {

template <int Dim>
using Vec = Eigen::Matrix<double, Dim, 1>;

template <int Dim>
using Mat = Eigen::Matrix<double, Dim, Dim>;

/// Small dense blocks used by the per-element DG systems (at most P2 in 2D).
inline constexpr int kMaxModes = 6;
using LocalMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxModes, kMaxModes>;
using LocalVector = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxModes, 1>;

inline constexpr double kPhotonSpeed = 3.0e8;

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Thrown when a mesh operation would produce or consume an invalid mesh.
class MeshError : public Error {
public:
  MeshError(const std::string& what, int element) : Error(what), element_(element) {}
  int element() const { return element_; }

private:
  int element_;
};

inline int num_modes(int dim, int degree) {
  return dim == 1 ? degree + 1 : (degree + 1) * (degree + 2) / 2;
}

}  // namespace rtmm
