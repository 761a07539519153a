#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "mwtomo/grid.hpp"

namespace mwt {

enum class Side { Bottom = 0, Right = 1, Top = 2, Left = 3 };

inline const char* side_name(Side s) {
  switch (s) {
    case Side::Bottom: return "bottom";
    case Side::Right: return "right";
    case Side::Top: return "top";
    case Side::Left: return "left";
  }
  return "?";
}

/// Counterclockwise perimeter enumeration: bottom (y = y0, x increasing),
/// right (x = x1, y increasing), top (y = y1, x decreasing), left (x = x0,
/// y decreasing). Each side owns its starting corner and excludes its end
/// corner, so every boundary node appears exactly once and the arclength of
/// slot k is k * dx.
struct PerimeterMap {
  int nx = 0, ny = 0;
  Eigen::ArrayXi ix, iy;    // node indices per slot
  Eigen::ArrayXi side;      // Side per slot
  Eigen::ArrayXXi slot;     // ny x nx: slot of a boundary node, -1 off-perimeter
  Eigen::ArrayXi begin;     // first slot of each side (size 5, begin(4) = n)

  int n() const { return static_cast<int>(ix.size()); }
  int side_begin(Side s) const { return begin(static_cast<int>(s)); }
  int side_size(Side s) const { return begin(static_cast<int>(s) + 1) - begin(static_cast<int>(s)); }
};

inline PerimeterMap make_perimeter(const GridSpec& g) {
  PerimeterMap p;
  p.nx = g.nx;
  p.ny = g.ny;
  const int n = 2 * (g.nx - 1) + 2 * (g.ny - 1);
  p.ix.resize(n);
  p.iy.resize(n);
  p.side.resize(n);
  p.slot = Eigen::ArrayXXi::Constant(g.ny, g.nx, -1);
  p.begin.resize(5);
  int k = 0;
  p.begin(0) = k;
  for (int ix = 0; ix < g.nx - 1; ++ix, ++k) { p.ix(k) = ix; p.iy(k) = 0; p.side(k) = 0; }
  p.begin(1) = k;
  for (int iy = 0; iy < g.ny - 1; ++iy, ++k) { p.ix(k) = g.nx - 1; p.iy(k) = iy; p.side(k) = 1; }
  p.begin(2) = k;
  for (int ix = g.nx - 1; ix > 0; --ix, ++k) { p.ix(k) = ix; p.iy(k) = g.ny - 1; p.side(k) = 2; }
  p.begin(3) = k;
  for (int iy = g.ny - 1; iy > 0; --iy, ++k) { p.ix(k) = 0; p.iy(k) = iy; p.side(k) = 3; }
  p.begin(4) = k;
  for (int s = 0; s < n; ++s) p.slot(p.iy(s), p.ix(s)) = s;
  return p;
}

// ---------------------------------------------------------------------------
// Measurement windows on the boundary
// ---------------------------------------------------------------------------

/// Which perimeter slots carry data, plus an optional time window [0, t_data].
struct GammaMask {
  Eigen::Array<bool, Eigen::Dynamic, 1> on;
  std::optional<double> t_data;

  int count() const { return static_cast<int>(on.count()); }
  bool full() const { return count() == static_cast<int>(on.size()); }
};

inline GammaMask gamma_full(const PerimeterMap& p) {
  GammaMask m;
  m.on = Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(p.n(), true);
  return m;
}

inline GammaMask gamma_sides(const PerimeterMap& p, const std::vector<Side>& sides) {
  GammaMask m;
  m.on = Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(p.n(), false);
  for (Side s : sides)
    for (int k = p.side_begin(s); k < p.side_begin(s) + p.side_size(s); ++k) m.on(k) = true;
  return m;
}

/// @brief Bottom and left sides plus the leading `fraction` of the two sides
/// adjacent to them: the low-y part of the right side and the low-x part of
/// the top side. Nodes exactly on the fraction line are included, so the
/// interface node of each partial side carries data.
inline GammaMask gamma_bottom_left_adjacent(const PerimeterMap& p, const GridSpec& g, double fraction = 0.2) {
  if (!(fraction >= 0.0) || fraction > 1.0)
    throw ValidationError("gamma_bottom_left_adjacent: fraction must lie in [0, 1]");
  GammaMask m = gamma_sides(p, {Side::Bottom, Side::Left});
  const double eps = 1e-9 * g.width();
  for (int k = p.side_begin(Side::Right); k < p.side_begin(Side::Right) + p.side_size(Side::Right); ++k)
    if (g.y(p.iy(k)) - g.y0 <= fraction * (g.y1 - g.y0) + eps) m.on(k) = true;
  for (int k = p.side_begin(Side::Top); k < p.side_begin(Side::Top) + p.side_size(Side::Top); ++k)
    if (g.x(p.ix(k)) - g.x0 <= fraction * (g.x1 - g.x0) + eps) m.on(k) = true;
  return m;
}

/// Boundary measurements: one row per time level, one column per perimeter
/// slot; columns outside gamma are kept identically zero.
template <typename Scalar>
struct BoundaryTrace {
  Trace<Scalar> values;
  GammaMask gamma;
};

using BoundaryTraceXd = BoundaryTrace<double>;

template <typename Scalar>
void zero_outside(Trace<Scalar>& values, const GammaMask& m) {
  for (int k = 0; k < static_cast<int>(m.on.size()); ++k)
    if (!m.on(k)) values.col(k).setZero();
}

// ---------------------------------------------------------------------------
// Trace inner products
// ---------------------------------------------------------------------------
// Trace quadrature: dt on the time axis, dx along the perimeter (uniform
// arclength weights are the exact trapezoid rule on a closed curve). This is
// the Riemann sum of the continuum L2((0,T) x Gamma) pairing, so operator
// norms converge to their continuum values as the grid refines and step-size
// ranges quoted for the continuum problem carry over unchanged. Weighting the
// time axis by dx instead would inflate every norm by sqrt(2) c_max and shift
// the usable Landweber step range with it.

template <typename D1, typename D2>
double trace_inner(const Eigen::ArrayBase<D1>& a, const Eigen::ArrayBase<D2>& b, const GridSpec& g) {
  return (a.template cast<double>() * b.template cast<double>()).sum() * g.dt * g.dx;
}

template <typename D>
double trace_norm(const Eigen::ArrayBase<D>& a, const GridSpec& g) {
  return std::sqrt(std::max(0.0, (a.template cast<double>().square()).sum() * g.dt * g.dx));
}

// ---------------------------------------------------------------------------
// Side blocks and resampling
// ---------------------------------------------------------------------------

/// @brief Copy of one side's contiguous block of columns.
template <typename Scalar>
Trace<Scalar> side_block(const Trace<Scalar>& values, const PerimeterMap& p, Side s) {
  return values.middleCols(p.side_begin(s), p.side_size(s));
}

template <typename Scalar>
void set_side_block(Trace<Scalar>& values, const PerimeterMap& p, Side s, const Trace<Scalar>& block) {
  if (block.rows() != values.rows() || block.cols() != p.side_size(s))
    throw ValidationError("set_side_block: block shape mismatch");
  values.middleCols(p.side_begin(s), p.side_size(s)) = block;
}

/// @brief Resample a trace recorded on a finer grid onto a coarser one by
/// bilinear interpolation in (time, arclength). The arclength axis wraps
/// around the closed perimeter; the coarse time horizon must not extend past
/// the fine one.
template <typename Scalar>
Trace<Scalar> resample_trace(const Trace<Scalar>& fine, const GridSpec& fine_grid, const GridSpec& coarse_grid) {
  const int nf = 2 * (fine_grid.nx - 1) + 2 * (fine_grid.ny - 1);
  if (fine.cols() != nf || fine.rows() != fine_grid.nt + 1)
    throw ValidationError("resample_trace: trace shape does not match the fine grid");
  if (coarse_grid.t_final() > fine_grid.t_final() * (1.0 + 1e-9) + 1e-12)
    throw ValidationError("resample_trace: coarse horizon extends past the fine trace");
  const int nc = 2 * (coarse_grid.nx - 1) + 2 * (coarse_grid.ny - 1);
  Trace<Scalar> out(coarse_grid.nt + 1, nc);
  for (int n = 0; n <= coarse_grid.nt; ++n) {
    const double t = n * coarse_grid.dt;
    double ti = t / fine_grid.dt;
    int t0 = static_cast<int>(std::floor(ti));
    if (t0 >= fine_grid.nt) t0 = fine_grid.nt - 1;  // clamp the last sliver
    if (t0 < 0) t0 = 0;
    const double ft = std::min(1.0, std::max(0.0, ti - t0));
    for (int k = 0; k < nc; ++k) {
      double s = k * coarse_grid.dx;
      double si = s / fine_grid.dx;
      int s0 = static_cast<int>(std::floor(si));
      const double fs = si - s0;
      s0 %= nf;
      const int s1 = (s0 + 1) % nf;  // arclength wraps at the closing corner
      const double v00 = fine(t0, s0), v01 = fine(t0, s1);
      const double v10 = fine(t0 + 1, s0), v11 = fine(t0 + 1, s1);
      out(n, k) = static_cast<Scalar>((1 - ft) * ((1 - fs) * v00 + fs * v01) + ft * ((1 - fs) * v10 + fs * v11));
    }
  }
  return out;
}

}  // namespace mwt
