#pragma once

#include <cmath>
#include <vector>

#include "mwtomo/grid.hpp"

namespace mwt {

template <typename Scalar = double>
Field<Scalar> coord_x(const GridSpec& g) {
  Field<Scalar> f(g.ny, g.nx);
  for (int ix = 0; ix < g.nx; ++ix) f.col(ix) = static_cast<Scalar>(g.x(ix));
  return f;
}

template <typename Scalar = double>
Field<Scalar> coord_y(const GridSpec& g) {
  Field<Scalar> f(g.ny, g.nx);
  for (int iy = 0; iy < g.ny; ++iy) f.row(iy) = static_cast<Scalar>(g.y(iy));
  return f;
}

// ---------------------------------------------------------------------------
// Phantoms
// ---------------------------------------------------------------------------

/// One ellipse of the head phantom: additive value, semi-axes, center, tilt.
struct PhantomEllipse {
  double value, a, b, cx, cy, phi_deg;
};

/// The ten-ellipse head phantom table (modified intensities: skull 1.0,
/// interior contrasts in [-0.8, 0.1], so the summed field stays in [0, 1]).
inline const std::vector<PhantomEllipse>& head_phantom_table() {
  static const std::vector<PhantomEllipse> table = {
      {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},
      {-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0},
      {-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0},
      {-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0},
      {0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0},
      {0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0},
      {0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0},
      {0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0},
      {0.1, 0.0230, 0.0230, 0.0, -0.605, 0.0},
      {0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0},
  };
  return table;
}

/// @brief Point evaluation of the ellipse stack at (x, y).
inline double shepp_logan_at(double x, double y) {
  double v = 0.0;
  for (const auto& e : head_phantom_table()) {
    const double phi = e.phi_deg * M_PI / 180.0;
    const double c = std::cos(phi), s = std::sin(phi);
    const double xr = (x - e.cx) * c + (y - e.cy) * s;
    const double yr = -(x - e.cx) * s + (y - e.cy) * c;
    if (xr * xr / (e.a * e.a) + yr * yr / (e.b * e.b) <= 1.0) v += e.value;
  }
  return v;
}

/// @brief Render the head phantom on the grid. With supersample = s > 1 each
/// node takes the box average of s*s point samples covering its cell, which
/// softens the jump discontinuities deterministically; s = 1 point-samples.
template <typename Scalar = double>
Field<Scalar> render_shepp_logan(const GridSpec& g, int supersample = 4) {
  if (supersample < 1) throw ValidationError("render_shepp_logan: supersample must be >= 1");
  Field<Scalar> f(g.ny, g.nx);
  const int s = supersample;
  const double inv = 1.0 / (s * s);
  for (int iy = 0; iy < g.ny; ++iy) {
    for (int ix = 0; ix < g.nx; ++ix) {
      double acc = 0.0;
      for (int ky = 0; ky < s; ++ky) {
        const double oy = ((ky + 0.5) / s - 0.5) * g.dy;
        for (int kx = 0; kx < s; ++kx) {
          const double ox = ((kx + 0.5) / s - 0.5) * g.dx;
          acc += shepp_logan_at(g.x(ix) + ox, g.y(iy) + oy);
        }
      }
      f(iy, ix) = static_cast<Scalar>(acc * inv);
    }
  }
  return f;
}

/// Isotropic Gaussian bump: amplitude * exp(-r^2 / (2 width^2)).
struct GaussianBlob {
  double cx = 0.0, cy = 0.0;
  double width = 0.2;
  double amplitude = 1.0;
};

template <typename Scalar = double>
Field<Scalar> render_gaussians(const GridSpec& g, const std::vector<GaussianBlob>& blobs) {
  for (const auto& b : blobs)
    if (!(b.width > 0.0)) throw ValidationError("render_gaussians: blob width must be positive");
  Field<Scalar> f = Field<Scalar>::Zero(g.ny, g.nx);
  for (const auto& b : blobs) {
    const double inv2w2 = 1.0 / (2.0 * b.width * b.width);
    for (int iy = 0; iy < g.ny; ++iy)
      for (int ix = 0; ix < g.nx; ++ix) {
        const double ddx = g.x(ix) - b.cx;
        const double ddy = g.y(iy) - b.cy;
        f(iy, ix) += static_cast<Scalar>(b.amplitude * std::exp(-(ddx * ddx + ddy * ddy) * inv2w2));
      }
  }
  return f;
}

// ---------------------------------------------------------------------------
// Speed models
// ---------------------------------------------------------------------------

/// @brief Smooth speed 1 + 0.3 sin(pi x) + 0.2 cos(pi y), range [0.5, 1.5].
template <typename Scalar = double>
Field<Scalar> speed_trig(const GridSpec& g) {
  Field<Scalar> c(g.ny, g.nx);
  for (int iy = 0; iy < g.ny; ++iy)
    for (int ix = 0; ix < g.nx; ++ix)
      c(iy, ix) = static_cast<Scalar>(1.0 + 0.3 * std::sin(M_PI * g.x(ix)) + 0.2 * std::cos(M_PI * g.y(iy)));
  return c;
}

template <typename Scalar = double>
Field<Scalar> speed_constant(const GridSpec& g, double c0 = 1.0) {
  if (!(c0 > 0.0)) throw ValidationError("speed_constant: speed must be positive");
  return Field<Scalar>::Constant(g.ny, g.nx, static_cast<Scalar>(c0));
}

/// Piecewise-constant speed with a jump across an axis-aligned square.
struct SquareJump {
  double c_in = 1.0;
  double c_out = 1.5;
  double half_side = 0.5;
  double cx = 0.0, cy = 0.0;
};

template <typename Scalar = double>
Field<Scalar> speed_square_jump(const GridSpec& g, const SquareJump& sj = {}) {
  if (!(sj.c_in > 0.0) || !(sj.c_out > 0.0))
    throw ValidationError("speed_square_jump: speeds must be positive");
  if (!(sj.half_side > 0.0)) throw ValidationError("speed_square_jump: half_side must be positive");
  Field<Scalar> c(g.ny, g.nx);
  // A hair of slack keeps nodes nominally on the interface classified as
  // inside regardless of how the grid coordinates round.
  const double hs = sj.half_side * (1.0 + 1e-9);
  for (int iy = 0; iy < g.ny; ++iy)
    for (int ix = 0; ix < g.nx; ++ix) {
      const bool inside = std::abs(g.x(ix) - sj.cx) <= hs && std::abs(g.y(iy) - sj.cy) <= hs;
      c(iy, ix) = static_cast<Scalar>(inside ? sj.c_in : sj.c_out);
    }
  return c;
}

// ---------------------------------------------------------------------------
// Interior cutoff
// ---------------------------------------------------------------------------

/// Index bounds of the interior sub-square kept by the margin cutoff.
struct InteriorBox {
  int i0 = 0, i1 = 0;  // x-index range [i0, i1], inclusive
  int j0 = 0, j1 = 0;  // y-index range
  int nxi() const { return i1 - i0 + 1; }
  int nyi() const { return j1 - j0 + 1; }
  int count() const { return nxi() * nyi(); }
  bool contains(int iy, int ix) const { return ix >= i0 && ix <= i1 && iy >= j0 && iy <= j1; }
};

/// @brief Nodes at distance >= margin_fraction * width from every edge,
/// snapped to the grid (a node exactly on the margin line is kept).
inline InteriorBox interior_box(const GridSpec& g, double margin_fraction = 0.03) {
  if (!(margin_fraction >= 0.0) || margin_fraction >= 0.5)
    throw ValidationError("interior_box: margin fraction must lie in [0, 0.5)");
  const double margin = margin_fraction * g.width();
  const int k = static_cast<int>(std::ceil(margin / g.dx - 1e-9));
  InteriorBox b;
  b.i0 = b.j0 = k;
  b.i1 = g.nx - 1 - k;
  b.j1 = g.ny - 1 - k;
  if (b.i1 - b.i0 < 2 || b.j1 - b.j0 < 2)
    throw ValidationError("interior_box: margin leaves no usable interior");
  return b;
}

/// @brief Indicator field of the interior box (1 inside, 0 in the margin frame).
template <typename Scalar = double>
Field<Scalar> interior_cutoff(const GridSpec& g, double margin_fraction = 0.03) {
  const InteriorBox b = interior_box(g, margin_fraction);
  Field<Scalar> chi = Field<Scalar>::Zero(g.ny, g.nx);
  chi.block(b.j0, b.i0, b.nyi(), b.nxi()) = Scalar(1);
  return chi;
}

// ---------------------------------------------------------------------------
// Norms and errors
// ---------------------------------------------------------------------------

/// @brief Weighted inner product <f, h> = sum f h c^-2 w, the natural field
/// pairing for this problem (trapezoid quadrature weights w).
template <typename D1, typename D2, typename D3>
double weighted_inner(const Eigen::ArrayBase<D1>& f, const Eigen::ArrayBase<D2>& h,
                      const Eigen::ArrayBase<D3>& c, const GridSpec& g) {
  const FieldXd w = node_weights(g);
  return ((f.template cast<double>() * h.template cast<double>()) /
          (c.template cast<double>() * c.template cast<double>()) * w)
      .sum();
}

template <typename D1, typename D2>
double weighted_norm(const Eigen::ArrayBase<D1>& f, const Eigen::ArrayBase<D2>& c, const GridSpec& g) {
  return std::sqrt(std::max(0.0, weighted_inner(f, f, c, g)));
}

/// @brief ||f - ref|| / ||ref|| in the weighted norm; rejects ||ref|| = 0.
template <typename D1, typename D2, typename D3>
double relative_error(const Eigen::ArrayBase<D1>& f, const Eigen::ArrayBase<D2>& ref,
                      const Eigen::ArrayBase<D3>& c, const GridSpec& g) {
  const double denom = weighted_norm(ref, c, g);
  if (denom == 0.0) throw ValidationError("relative_error: reference field has zero norm");
  return weighted_norm((f - ref).eval(), c, g) / denom;
}

/// @brief Gradient-energy pairing sum grad f . grad h dx dy, forward differences.
template <typename D1, typename D2>
double hd_inner(const Eigen::ArrayBase<D1>& fe, const Eigen::ArrayBase<D2>& he, const GridSpec& g) {
  const FieldXd f = fe.template cast<double>();
  const FieldXd h = he.template cast<double>();
  const int ny = g.ny, nx = g.nx;
  const double cell = g.dx * g.dy;
  // x-direction differences over (ny) x (nx-1) node pairs, then y-direction.
  double acc = (((f.rightCols(nx - 1) - f.leftCols(nx - 1)) * (h.rightCols(nx - 1) - h.leftCols(nx - 1))).sum()) /
               (g.dx * g.dx);
  acc += (((f.bottomRows(ny - 1) - f.topRows(ny - 1)) * (h.bottomRows(ny - 1) - h.topRows(ny - 1))).sum()) /
         (g.dy * g.dy);
  return acc * cell;
}

template <typename D>
double hd_seminorm(const Eigen::ArrayBase<D>& f, const GridSpec& g) {
  return std::sqrt(std::max(0.0, hd_inner(f, f, g)));
}

}  // namespace mwt
