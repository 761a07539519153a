#pragma once

#include <Eigen/Core>
#include <cmath>

#include "mwtomo/errors.hpp"

namespace mwt {

template <typename Scalar>
using Field = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Trace = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using FieldXd = Field<double>;
using TraceXd = Trace<double>;

/// Uniform tensor grid on the closed square [-1,1]^2 plus the leapfrog time
/// axis. Fields store y as the row index and x as the column index, so
/// f(iy, ix) samples the point (x0 + ix*dx, y0 + iy*dy).
struct GridSpec {
  int nx = 0;
  int ny = 0;
  double x0 = -1.0, x1 = 1.0;
  double y0 = -1.0, y1 = 1.0;
  double dx = 0.0, dy = 0.0;
  double dt = 0.0;
  int nt = 0;

  double x(int ix) const { return x0 + ix * dx; }
  double y(int iy) const { return y0 + iy * dy; }
  double t(int n) const { return n * dt; }
  /// Final time actually covered by the nt steps (>= the requested horizon).
  double t_final() const { return nt * dt; }
  int n_nodes() const { return nx * ny; }
  double width() const { return x1 - x0; }
};

/// @brief Largest stable leapfrog step for the 5-point stencil at speed c_max.
inline double cfl_limit(double dx, double c_max) { return dx / (std::sqrt(2.0) * c_max); }

/// @brief Build a grid with nx = ny nodes per axis. The time step is locked to
/// the stability bound, dt = dx / (safety * sqrt(2) * c_max), and the horizon
/// is covered with nt = ceil(T / dt) steps.
///
/// `safety` > 1 shrinks dt below the CFL limit (used when a finer time axis is
/// wanted at a fixed spatial resolution).
inline GridSpec make_grid(int nx, double T, double c_max, double safety = 1.0) {
  if (nx < 3) throw ValidationError("make_grid: nx must be at least 3");
  if (!(T > 0.0)) throw ValidationError("make_grid: time horizon T must be positive");
  if (!(c_max > 0.0)) throw ValidationError("make_grid: c_max must be positive");
  if (!(safety >= 1.0)) throw ValidationError("make_grid: safety factor below 1 breaks the CFL bound");
  GridSpec g;
  g.nx = g.ny = nx;
  g.dx = (g.x1 - g.x0) / (nx - 1);
  g.dy = g.dx;
  g.dt = g.dx / (safety * std::sqrt(2.0) * c_max);
  g.nt = static_cast<int>(std::ceil(T / g.dt - 1e-12));
  if (g.nt < 1) g.nt = 1;
  return g;
}

/// @brief Trapezoid weights along one axis: h at interior nodes, h/2 at the ends.
inline Eigen::ArrayXd axis_weights(int n, double h) {
  if (n < 2) throw ValidationError("axis_weights: need at least two nodes");
  Eigen::ArrayXd w = Eigen::ArrayXd::Constant(n, h);
  w(0) = 0.5 * h;
  w(n - 1) = 0.5 * h;
  return w;
}

/// @brief Tensor-product quadrature weights for integrals over the square:
/// dx*dy at interior nodes, halved per touching edge, quartered at corners.
template <typename Scalar = double>
Field<Scalar> node_weights(const GridSpec& g) {
  const Eigen::ArrayXd wx = axis_weights(g.nx, g.dx);
  const Eigen::ArrayXd wy = axis_weights(g.ny, g.dy);
  Field<Scalar> w(g.ny, g.nx);
  for (int iy = 0; iy < g.ny; ++iy)
    for (int ix = 0; ix < g.nx; ++ix) w(iy, ix) = static_cast<Scalar>(wy(iy) * wx(ix));
  return w;
}

}  // namespace mwt
