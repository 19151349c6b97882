#pragma once

#include "rtmm/angular_quadrature.hpp"
#include "rtmm/core.hpp"
#include "rtmm/mesh.hpp"

#include <unsupported/Eigen/AutoDiff>

#include <array>
#include <cmath>
#include <algorithm>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <type_traits>
#include <vector>

namespace rtmm {

/// Value, time derivative and spatial gradient of a space-time function.
template <int Dim>
struct Jet {
  double value = 0.0;
  double dt = 0.0;
  Vec<Dim> grad = Vec<Dim>::Zero();
};

/// A radiative transfer problem on a box: coefficients, sources and data.
/// Every function takes (x, direction, t); in 1D the direction is mu, in 2D
/// it is the in-plane projection (zeta, eta) with mu^2 = 1 - zeta^2 - eta^2.
template <int Dim>
struct Problem {
  using Fn = std::function<double(const Vec<Dim>&, const Vec<Dim>&, double)>;

  std::string name;
  Box<Dim> domain;
  double c = kPhotonSpeed;
  double sigma_s = 0.0;
  std::function<double(const Vec<Dim>&)> sigma_t;
  std::optional<double> sigma_t_constant;  // set when sigma_t is uniform
  Fn source;
  Fn boundary;  // only evaluated on inflow boundary points
  Fn initial;
  std::optional<Fn> exact;
  std::function<Jet<Dim>(const Vec<Dim>&, const Vec<Dim>&, double)> exact_jet;
  // points where the exact solution is not smooth; residual sampling avoids them
  std::function<bool(const Vec<Dim>&, const Vec<Dim>&)> near_kink;
  bool smooth = false;
  std::optional<Vec<Dim>> fixed_direction;
  bool initial_matches_exact = true;

  double default_tau() const { return smooth ? 0.1 : 0.01; }

  AngularQuadrature<Dim> default_quadrature() const {
    if (fixed_direction) return single_direction<Dim>(*fixed_direction);
    if constexpr (Dim == 1) {
      return gauss_legendre_1d(8);
    } else {
      return legendre_chebyshev_2d(8, 8);
    }
  }
};

namespace detail {

template <int Dim, class F>
std::function<Jet<Dim>(const Vec<Dim>&, const Vec<Dim>&, double)> make_jet(F f) {
  return [f](const Vec<Dim>& x, const Vec<Dim>& dir, double t) {
    using AD = Eigen::AutoDiffScalar<Eigen::Matrix<double, Dim + 1, 1>>;
    std::array<AD, Dim> xa;
    for (int i = 0; i < Dim; ++i) xa[i] = AD(x[i], Dim + 1, i);
    const AD ta(t, Dim + 1, Dim);
    const AD r = f(xa, dir, ta);
    Jet<Dim> j;
    j.value = r.value();
    for (int i = 0; i < Dim; ++i) j.grad[i] = r.derivatives()[i];
    j.dt = r.derivatives()[Dim];
    return j;
  };
}

template <int Dim, class F>
typename Problem<Dim>::Fn make_plain(F f) {
  return [f](const Vec<Dim>& x, const Vec<Dim>& dir, double t) {
    std::array<double, Dim> xa;
    for (int i = 0; i < Dim; ++i) xa[i] = x[i];
    return f(xa, dir, t);
  };
}

template <int Dim, class F>
void attach_exact(Problem<Dim>& p, F f) {
  p.exact = make_plain<Dim>(f);
  p.exact_jet = make_jet<Dim>(f);
}

inline double mu_squared(const Vec<2>& d) { return std::max(0.0, 1.0 - d.squaredNorm()); }

}  // namespace detail

inline Problem<1> make_ex1_1d() {
  Problem<1> p;
  p.name = "ex1-1d";
  p.domain = {Vec<1>(0.0), Vec<1>(1.0)};
  p.sigma_s = 1.0;
  p.sigma_t_constant = 22000.0;
  p.sigma_t = [](const Vec<1>&) { return 22000.0; };
  p.smooth = true;
  const double st = 22000.0, ss = 1.0, c = p.c;
  auto ex = [](const auto& x, const Vec<1>& d, const auto& t) {
    using std::cos;
    using T = std::decay_t<decltype(x[0])>;
    const T cc = cos(std::numbers::pi * (x[0] + t));
    const T c2 = cc * cc;
    return T(d[0] * d[0] * c2 * c2 + 1.0);
  };
  detail::attach_exact<1>(p, ex);
  p.source = [=](const Vec<1>& x, const Vec<1>& d, double t) {
    const double mu = d[0];
    const double arg = std::numbers::pi * (x[0] + t);
    const double cs = std::cos(arg), sn = std::sin(arg);
    return -4.0 * std::numbers::pi * mu * mu * cs * cs * cs * sn * (1.0 / c + mu) +
           (st * mu * mu - ss / 3.0) * cs * cs * cs * cs + st - ss;
  };
  p.boundary = *p.exact;
  p.initial = [](const Vec<1>& x, const Vec<1>& d, double) {
    const double cs = std::cos(std::numbers::pi * x[0]);
    return d[0] * d[0] * cs * cs * cs * cs + 1.0;
  };
  return p;
}

inline Problem<1> make_ex7_1d() {
  Problem<1> p;
  p.name = "ex7-1d";
  p.domain = {Vec<1>(-1.0), Vec<1>(1.0)};
  p.sigma_s = 1.0;
  p.sigma_t_constant = 1000.0;
  p.sigma_t = [](const Vec<1>&) { return 1000.0; };
  const double st = 1000.0, ss = 1.0, R = 200.0, a = 2.0, c = p.c;
  auto ex = [=](const auto& x, const Vec<1>& d, const auto& t) {
    using std::sin;
    using std::tanh;
    using T = std::decay_t<decltype(x[0])>;
    const T th = tanh(R * x[0]);
    const T arg = 2.0 * std::numbers::pi * (th + 5.0 * d[0] * t);
    return T(sin(arg) + a);
  };
  detail::attach_exact<1>(p, ex);
  p.source = [=](const Vec<1>& x, const Vec<1>& d, double t) {
    const double pi = std::numbers::pi;
    const double mu = d[0];
    const double th = std::tanh(R * x[0]);
    const double arg = 2.0 * pi * (th + 5.0 * mu * t);
    // the scattering term (cos(2pi(th+5t)) - cos(2pi(th-5t))) / (20 pi t) written
    // as -sin(2pi th) sinc(10 pi t), which stays finite at t = 0
    const double z = 10.0 * pi * t;
    const double sinc = std::abs(z) < 1e-8 ? 1.0 - z * z / 6.0 : std::sin(z) / z;
    return st * std::sin(arg) + 10.0 * pi * mu / c * std::cos(arg) +
           2.0 * pi * mu * R * std::cos(arg) * (1.0 - th * th) - ss * std::sin(2.0 * pi * th) * sinc +
           a * (st - ss);
  };
  p.boundary = *p.exact;
  p.initial = [=](const Vec<1>& x, const Vec<1>&, double) {
    return std::sin(2.0 * std::numbers::pi * std::tanh(R * x[0])) + a;
  };
  return p;
}

inline Problem<1> make_ex6_1d() {
  Problem<1> p;
  p.name = "ex6-1d";
  p.domain = {Vec<1>(0.0), Vec<1>(1.0)};
  p.sigma_s = 1.0;
  p.sigma_t = [](const Vec<1>& x) { return x[0] < 0.2 ? 1.0 : (x[0] < 0.6 ? 900.0 : 90.0); };
  p.source = [](const Vec<1>& x, const Vec<1>&, double t) {
    return x[0] < 0.2 ? 100.0 * std::exp(-t) : (x[0] < 0.6 ? 1.0 : 1000.0 * std::exp(3.0 * t));
  };
  p.boundary = [](const Vec<1>& x, const Vec<1>& d, double t) {
    if (x[0] < 0.5) {
      if (d[0] <= 0.0) throw Error("ex6-1d: boundary data requested on an outflow point");
      return 0.0;
    }
    if (d[0] >= 0.0) throw Error("ex6-1d: boundary data requested on an outflow point");
    return 15.0 + 2.0 * t;
  };
  p.initial = [](const Vec<1>& x, const Vec<1>&, double) { return 15.0 * x[0]; };
  return p;
}

inline Problem<2> make_ex1_2d() {
  Problem<2> p;
  p.name = "ex1-2d";
  p.domain = {Vec<2>(0.0, 0.0), Vec<2>(1.0, 1.0)};
  p.sigma_s = 1.0;
  p.sigma_t_constant = 22000.0;
  p.sigma_t = [](const Vec<2>&) { return 22000.0; };
  p.smooth = true;
  const double st = 22000.0, ss = 1.0, c = p.c;
  auto ex = [](const auto& x, const Vec<2>& d, const auto& t) {
    using std::cos;
    using std::exp;
    using T = std::decay_t<decltype(x[0])>;
    const T cc = cos(0.5 * std::numbers::pi * (x[0] + x[1]));
    const T c2 = cc * cc;
    const T et = exp(t);
    return T(et * (d.squaredNorm() * c2 * c2 + 1.0));
  };
  detail::attach_exact<2>(p, ex);
  p.source = [=](const Vec<2>& x, const Vec<2>& d, double t) {
    const double pi = std::numbers::pi;
    const double w = d.squaredNorm();
    const double arg = 0.5 * pi * (x[0] + x[1]);
    const double cs = std::cos(arg), sn = std::sin(arg);
    const double c4 = cs * cs * cs * cs;
    return std::exp(t) * (-2.0 * pi * (d[0] + d[1]) * w * cs * cs * cs * sn +
                          ((1.0 / c + st) * w - 2.0 / 3.0 * ss) * c4 + (1.0 / c + st - ss));
  };
  p.boundary = *p.exact;
  p.initial = [](const Vec<2>& x, const Vec<2>& d, double) {
    const double cs = std::cos(0.5 * std::numbers::pi * (x[0] + x[1]));
    return d.squaredNorm() * cs * cs * cs * cs + 1.0;
  };
  return p;
}

inline Problem<2> make_ex3_2d() {
  Problem<2> p;
  p.name = "ex3-2d";
  p.domain = {Vec<2>(0.0, 0.0), Vec<2>(1.0, 1.0)};
  p.sigma_s = 0.0;
  p.sigma_t_constant = 0.0;
  p.sigma_t = [](const Vec<2>&) { return 0.0; };
  p.fixed_direction = Vec<2>(0.3, 0.5);
  p.initial_matches_exact = false;
  const double c = p.c;
  auto ex = [=](const auto& x, const Vec<2>& d, const auto& t) {
    using std::cos;
    using T = std::decay_t<decltype(x[0])>;
    const double slope = d[1] / d[0];
    if (x[1] < slope * x[0]) return T(0.0 * x[0]);
    const T a = cos(0.5 * std::numbers::pi * (x[1] - slope * x[0]));
    const T b = cos(t - x[0] / (c * d[0]));
    const T a2 = a * a, b2 = b * b, b4 = b2 * b2;
    return T(a2 * a2 * a2 * b4 * b4 * b2);
  };
  detail::attach_exact<2>(p, ex);
  p.near_kink = [](const Vec<2>& x, const Vec<2>& d) { return std::abs(x[1] - d[1] / d[0] * x[0]) < 1e-6; };
  p.source = [](const Vec<2>&, const Vec<2>&, double) { return 0.0; };
  p.boundary = [](const Vec<2>& x, const Vec<2>&, double t) {
    if (std::abs(x[0]) <= 1e-12) {
      const double a = std::cos(0.5 * std::numbers::pi * x[1]);
      return std::pow(a, 6) * std::pow(std::cos(t), 10);
    }
    if (std::abs(x[1]) <= 1e-12) return 0.0;
    throw Error("ex3-2d: boundary data requested off the inflow boundary");
  };
  p.initial = [](const Vec<2>& x, const Vec<2>& d, double) {
    if (x[1] < d[1] / d[0] * x[0]) return 0.0;
    return std::pow(std::cos(0.5 * std::numbers::pi * x[1]), 6);
  };
  return p;
}

inline Problem<2> make_ex2_2d() {
  Problem<2> p;
  p.name = "ex2-2d";
  p.domain = {Vec<2>(0.0, 0.0), Vec<2>(1.0, 1.0)};
  p.sigma_s = 0.0;
  p.sigma_t_constant = 1.0;
  p.sigma_t = [](const Vec<2>&) { return 1.0; };
  p.fixed_direction = Vec<2>(0.4, 0.9);
  p.initial_matches_exact = false;
  const double c = p.c, st = 1.0;
  auto ex = [=](const auto& x, const Vec<2>& d, const auto& t) {
    using std::exp;
    using std::tanh;
    using T = std::decay_t<decltype(x[0])>;
    const double zeta = d[0], eta = d[1];
    if (x[1] < eta / zeta * x[0]) {
      const T layer = tanh(500.0 * (x[0] - zeta / eta * x[1] - 0.5));
      const T decay = exp(-st / eta * x[1]);
      return T((layer + 1.0) * decay + 0.0 * t);
    }
    const T s = x[1] - eta / zeta * x[0];
    const T lag = t - x[0] / (c * zeta);
    return T(exp(s * s * lag - st / zeta * x[0]));
  };
  detail::attach_exact<2>(p, ex);
  p.near_kink = [](const Vec<2>& x, const Vec<2>& d) { return std::abs(x[1] - d[1] / d[0] * x[0]) < 1e-6; };
  p.source = [](const Vec<2>&, const Vec<2>&, double) { return 0.0; };
  p.boundary = [](const Vec<2>& x, const Vec<2>&, double t) {
    if (std::abs(x[0]) <= 1e-12) return std::exp(x[1] * x[1] * t);
    if (std::abs(x[1]) <= 1e-12) return std::tanh(500.0 * (x[0] - 0.5)) + 1.0;
    throw Error("ex2-2d: boundary data requested off the inflow boundary");
  };
  p.initial = [](const Vec<2>& x, const Vec<2>& d, double) {
    if (x[1] < d[1] / d[0] * x[0]) return std::tanh(500.0 * (x[0] - 0.5)) + 1.0;
    return 1.0;
  };
  return p;
}

/// (1/2) int_{-1}^{1} tanh(R (r2 - sqrt(2) |mu|)) dmu in closed form, evaluated
/// through a log-cosh that does not overflow.
inline double mean_ring_tanh(double r2, double R) {
  auto logcosh = [](double z) {
    const double a = std::abs(z);
    return a + std::log1p(std::exp(-2.0 * a)) - std::numbers::ln2;
  };
  return (logcosh(R * r2) - logcosh(R * (std::numbers::sqrt2 - r2))) / (std::numbers::sqrt2 * R);
}

inline Problem<2> make_ex4_2d() {
  Problem<2> p;
  p.name = "ex4-2d";
  p.domain = {Vec<2>(0.0, 0.0), Vec<2>(1.0, 1.0)};
  p.sigma_s = 1.0;
  p.sigma_t_constant = 10000.0;
  p.sigma_t = [](const Vec<2>&) { return 10000.0; };
  const double st = 10000.0, ss = 1.0, R = 200.0, a = 10.0, c = p.c;
  auto ex = [=](const auto& x, const Vec<2>& d, const auto& t) {
    using std::exp;
    using std::tanh;
    using T = std::decay_t<decltype(x[0])>;
    const double ring = std::sqrt(2.0 * detail::mu_squared(d));
    const T r2 = x[0] * x[0] + x[1] * x[1];
    const T th = tanh(R * (r2 - ring));
    const T et = exp(t);
    return T(et * (a - th));
  };
  detail::attach_exact<2>(p, ex);
  p.near_kink = [](const Vec<2>&, const Vec<2>&) { return false; };
  p.source = [=](const Vec<2>& x, const Vec<2>& d, double t) {
    const double r2 = x.squaredNorm();
    const double th = std::tanh(R * (r2 - std::sqrt(2.0 * detail::mu_squared(d))));
    return std::exp(t) * ((1.0 / c + st) * (a - th) - 2.0 * R * d.dot(x) * (1.0 - th * th) +
                          ss * mean_ring_tanh(r2, R) - ss * a);
  };
  p.boundary = *p.exact;
  p.initial = [=](const Vec<2>& x, const Vec<2>& d, double) {
    return a - std::tanh(R * (x.squaredNorm() - std::sqrt(2.0 * detail::mu_squared(d))));
  };
  return p;
}

inline Problem<2> make_ex5_2d() {
  Problem<2> p;
  p.name = "ex5-2d";
  p.domain = {Vec<2>(-1.0, -1.0), Vec<2>(1.0, 1.0)};
  p.sigma_s = 3.0;
  p.sigma_t_constant = 33.0;
  p.sigma_t = [](const Vec<2>&) { return 33.0; };
  const double st = 33.0, ss = 3.0, R = 200.0, a = 2.0, c = p.c;
  static constexpr std::array<std::array<double, 2>, 5> centers{{{0.0, 0.0}, {0.5, 0.5}, {0.5, -0.5}, {-0.5, 0.5}, {-0.5, -0.5}}};
  auto ex = [=](const auto& x, const Vec<2>& d, const auto& t) {
    using std::exp;
    using std::tanh;
    using T = std::decay_t<decltype(x[0])>;
    T sum = 0.0 * x[0];
    for (const auto& cc : centers) {
      const T dx = x[0] - cc[0];
      const T dy = x[1] - cc[1];
      const T ci = tanh(R * (dx * dx + dy * dy - 0.125));
      sum = sum + ci;
    }
    const T et = exp(t);
    return T(et * d.squaredNorm() * (5.0 * a - sum));
  };
  detail::attach_exact<2>(p, ex);
  p.near_kink = [](const Vec<2>&, const Vec<2>&) { return false; };
  p.source = [=](const Vec<2>& x, const Vec<2>& d, double t) {
    double sum = 0.0, transport = 0.0;
    for (const auto& cc : centers) {
      const double dx = x[0] - cc[0], dy = x[1] - cc[1];
      const double ci = std::tanh(R * (dx * dx + dy * dy - 0.125));
      sum += ci;
      transport += (d[0] * 2.0 * dx + d[1] * 2.0 * dy) * (1.0 - ci * ci);
    }
    const double w = d.squaredNorm();
    return std::exp(t) * w * ((1.0 / c + st) * (5.0 * a - sum) - R * transport) -
           2.0 / 3.0 * std::exp(t) * ss * (5.0 * a - sum);
  };
  p.boundary = *p.exact;
  p.initial = [exact = *p.exact](const Vec<2>& x, const Vec<2>& d, double) { return exact(x, d, 0.0); };
  return p;
}

/// Constant solution `level` with absorption and scattering; exercises
/// free-stream preservation.
template <int Dim>
Problem<Dim> make_freestream(double level = 1.5, double sigma_t = 2.0, double sigma_s = 1.0) {
  Problem<Dim> p;
  p.name = Dim == 1 ? "freestream-1d" : "freestream-2d";
  p.domain = {Vec<Dim>::Zero(), Vec<Dim>::Ones()};
  p.sigma_s = sigma_s;
  p.sigma_t_constant = sigma_t;
  p.sigma_t = [sigma_t](const Vec<Dim>&) { return sigma_t; };
  p.smooth = true;
  auto ex = [level](const auto& x, const Vec<Dim>&, const auto& t) {
    using T = std::decay_t<decltype(x[0])>;
    return T(0.0 * x[0] + 0.0 * t + level);
  };
  detail::attach_exact<Dim>(p, ex);
  p.source = [=](const Vec<Dim>&, const Vec<Dim>&, double) { return (sigma_t - sigma_s) * level; };
  p.boundary = *p.exact;
  p.initial = *p.exact;
  return p;
}

/// Isotropic data sampled at scattered points: linear interpolation in 1D,
/// nearest sample in 2D.
struct TabulatedData {
  std::vector<std::vector<double>> points;
  std::vector<double> values;

  template <int Dim>
  double operator()(const Vec<Dim>& x) const {
    if (values.empty()) throw Error("tabulated data is empty");
    if constexpr (Dim == 1) {
      if (x[0] <= points.front()[0]) return values.front();
      if (x[0] >= points.back()[0]) return values.back();
      const auto it = std::upper_bound(points.begin(), points.end(), x[0],
                                       [](double v, const std::vector<double>& p) { return v < p[0]; });
      const size_t i = static_cast<size_t>(it - points.begin());
      const double a = points[i - 1][0], b = points[i][0];
      const double s = b > a ? (x[0] - a) / (b - a) : 0.0;
      return (1.0 - s) * values[i - 1] + s * values[i];
    } else {
      size_t best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (size_t i = 0; i < values.size(); ++i) {
        const double d = (x - Vec<Dim>(points[i][0], points[i][1])).squaredNorm();
        if (d < bd) {
          bd = d;
          best = i;
        }
      }
      return values[best];
    }
  }
};

/// A problem assembled from configuration: constant coefficients and source,
/// tabulated initial and inflow data.
struct CustomProblemSpec {
  int dimension = 1;
  std::vector<double> lo{0.0}, hi{1.0};
  double c = kPhotonSpeed;
  double sigma_t = 1.0;
  double sigma_s = 0.0;
  double source = 0.0;
  bool smooth = false;
  TabulatedData initial;
  TabulatedData boundary;
};

template <int Dim>
Problem<Dim> make_custom(const CustomProblemSpec& spec) {
  if (spec.dimension != Dim) throw Error("custom problem dimension mismatch");
  if (static_cast<int>(spec.lo.size()) != Dim || static_cast<int>(spec.hi.size()) != Dim)
    throw Error("custom problem domain needs " + std::to_string(Dim) + " bounds per side");
  if (!(spec.sigma_t >= spec.sigma_s) || spec.sigma_s < 0.0) throw Error("custom problem needs sigma_t >= sigma_s >= 0");
  Problem<Dim> p;
  p.name = "custom";
  for (int d = 0; d < Dim; ++d) {
    p.domain.lo[d] = spec.lo[d];
    p.domain.hi[d] = spec.hi[d];
    if (!(p.domain.hi[d] > p.domain.lo[d])) throw Error("custom problem domain is empty");
  }
  p.c = spec.c;
  p.sigma_s = spec.sigma_s;
  p.sigma_t_constant = spec.sigma_t;
  const double st = spec.sigma_t, q = spec.source;
  p.sigma_t = [st](const Vec<Dim>&) { return st; };
  p.smooth = spec.smooth;
  p.source = [q](const Vec<Dim>&, const Vec<Dim>&, double) { return q; };
  const auto ini = spec.initial, bnd = spec.boundary;
  p.initial = [ini](const Vec<Dim>& x, const Vec<Dim>&, double) { return ini.template operator()<Dim>(x); };
  p.boundary = [bnd](const Vec<Dim>& x, const Vec<Dim>&, double) { return bnd.template operator()<Dim>(x); };
  return p;
}

inline std::vector<std::string> catalog_names() {
  return {"ex1-1d", "ex7-1d", "ex6-1d", "freestream-1d", "ex1-2d", "ex3-2d", "ex2-2d", "ex4-2d", "ex5-2d", "freestream-2d"};
}

inline int problem_dimension(const std::string& name) {
  const auto names = catalog_names();
  if (std::find(names.begin(), names.end(), name) == names.end()) throw Error("unknown problem '" + name + "'");
  return name.substr(name.size() - 3) == "-1d" ? 1 : 2;
}

template <int Dim>
Problem<Dim> catalog(const std::string& name) {
  if constexpr (Dim == 1) {
    if (name == "ex1-1d") return make_ex1_1d();
    if (name == "ex7-1d") return make_ex7_1d();
    if (name == "ex6-1d") return make_ex6_1d();
    if (name == "freestream-1d") return make_freestream<1>();
  } else {
    if (name == "ex1-2d") return make_ex1_2d();
    if (name == "ex3-2d") return make_ex3_2d();
    if (name == "ex2-2d") return make_ex2_2d();
    if (name == "ex4-2d") return make_ex4_2d();
    if (name == "ex5-2d") return make_ex5_2d();
    if (name == "freestream-2d") return make_freestream<2>();
  }
  throw Error("unknown " + std::to_string(Dim) + "D problem '" + name + "'");
}

/// (1/4pi) int_S f over the sphere by a fine composite rule in mu (panel edges
/// include mu = 0) times a midpoint rule in azimuth; independent of the solver's
/// angular quadrature.
template <int Dim, class F>
double sphere_mean(F f, int panels = 256, int n_azimuth = 16) {
  const auto gl = gauss_legendre(6);
  double total = 0.0;
  for (int k = 0; k < panels; ++k) {
    const double a = -1.0 + 2.0 * k / panels, b = -1.0 + 2.0 * (k + 1) / panels;
    for (int i = 0; i < 6; ++i) {
      const double mu = 0.5 * (a + b) + 0.5 * (b - a) * gl.nodes[i];
      const double w = 0.25 * (b - a) * gl.weights[i];  // (1/2) dmu
      if constexpr (Dim == 1) {
        total += w * f(Vec<1>(mu));
      } else {
        const double s = std::sqrt(std::max(0.0, 1.0 - mu * mu));
        double ring = 0.0;
        for (int j = 0; j < n_azimuth; ++j) {
          const double phi = (2.0 * j + 1.0) * std::numbers::pi / n_azimuth;
          ring += f(Vec<2>(s * std::cos(phi), s * std::sin(phi)));
        }
        total += w * ring / n_azimuth;
      }
    }
  }
  return total;
}

struct ResidualReport {
  double max_continuous = 0.0;  // residual of the continuous equation, relative to its term scale
  double max_discrete = 0.0;    // same, with the solver's angular rule in the scattering term
  int samples = 0;
};

/// Substitutes the exact solution into the transport equation at random points
/// and times. The continuous residual uses a fine sphere integral for the
/// scattering term; the discrete one uses `quad`, so it also contains the
/// angular quadrature error of the scattering integral.
template <int Dim>
ResidualReport manufactured_residual(const Problem<Dim>& p, const AngularQuadrature<Dim>& quad, int samples = 100,
                                     unsigned seed = 12345, double t_max = 0.1) {
  if (!p.exact) throw Error("manufactured_residual: problem has no exact solution");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ResidualReport rep;
  for (int s = 0; s < samples; ++s) {
    Vec<Dim> x;
    for (int d = 0; d < Dim; ++d) x[d] = p.domain.lo[d] + (p.domain.hi[d] - p.domain.lo[d]) * u(rng);
    const double t = t_max * u(rng);
    const int m = static_cast<int>(u(rng) * quad.count()) % quad.count();
    const Vec<Dim> dir = quad.directions[m];
    if (p.near_kink && p.near_kink(x, dir)) continue;
    const auto j = p.exact_jet(x, dir, t);
    const double st = p.sigma_t(x);
    double psi_cont = 0.0, psi_disc = 0.0;
    if (p.sigma_s != 0.0) {
      psi_cont = sphere_mean<Dim>([&](const Vec<Dim>& w) { return (*p.exact)(x, w, t); });
      for (int k = 0; k < quad.count(); ++k) psi_disc += quad.weights[k] * (*p.exact)(x, quad.directions[k], t);
    }
    const double transport = dir.dot(j.grad);
    const double q = p.source(x, dir, t);
    const double scale = std::abs(j.dt / p.c) + std::abs(transport) + std::abs(st * j.value) +
                         std::abs(p.sigma_s * psi_cont) + std::abs(q) + 1.0;
    const double r_cont = j.dt / p.c + transport + st * j.value - p.sigma_s * psi_cont - q;
    const double r_disc = r_cont + p.sigma_s * (psi_cont - psi_disc);
    rep.max_continuous = std::max(rep.max_continuous, std::abs(r_cont) / scale);
    rep.max_discrete = std::max(rep.max_discrete, std::abs(r_disc) / scale);
    ++rep.samples;
  }
  return rep;
}

}  // namespace rtmm
