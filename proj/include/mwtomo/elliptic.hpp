#pragma once

#include <cmath>
#include <cstdio>
#include <string>

#include <Eigen/Dense>

#include "mwtomo/boundary.hpp"
#include "mwtomo/errors.hpp"
#include "mwtomo/fields.hpp"
#include "mwtomo/grid.hpp"
#include "mwtomo/wave.hpp"

namespace mwt {

// ---------------------------------------------------------------------------
// Harmonic extensions and the zero-boundary gradient projection
// ---------------------------------------------------------------------------
//
// Both operations solve the 5-point Laplace system matrix-free with conjugate
// gradients, differing only in which nodes are pinned to prescribed values:
// the whole perimeter (Poisson extension), a boundary subset with mirror-ghost
// Neumann conditions elsewhere (Zaremba extension), or everything outside the
// strict interior of a sub-box (the projection onto fields vanishing there).

enum class EllipticBC { Dirichlet, Mixed };

inline const char* elliptic_bc_name(EllipticBC bc) {
  return bc == EllipticBC::Dirichlet ? "dirichlet" : "mixed";
}

/// Controls for the conjugate-gradient Laplace solves. The iteration stops
/// when the weighted residual norm drops below tolerance times the data
/// scale (boundary-data norm for extensions, right-hand-side norm for the
/// projection). A zero cap selects 10 * nx * ny iterations.
struct EllipticSolveSpec {
  double tolerance = 1e-8;
  int max_iterations = 0;
  EllipticBC bc = EllipticBC::Dirichlet;
};

namespace detail {

using PinMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

inline int elliptic_cap(const EllipticSolveSpec& spec, const GridSpec& g) {
  if (!(spec.tolerance > 0.0) || !(spec.tolerance < 1.0))
    throw ValidationError("elliptic: tolerance must lie in (0, 1)");
  if (spec.max_iterations < 0)
    throw ValidationError("elliptic: iteration cap must be nonnegative");
  return spec.max_iterations > 0 ? spec.max_iterations : 10 * g.nx * g.ny;
}

[[noreturn]] inline void throw_elliptic_stall(const char* what, double rel_residual, int cap) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%s: no convergence within %d iterations, final relative residual %.3e",
                what, cap, rel_residual);
  throw DivergenceError(buf);
}

/// @brief Solve -lap(u) = rhs at free nodes, u = pinned_values elsewhere, by
/// conjugate gradients in the trapezoid-weighted inner product (the pairing
/// that makes the mirror-ghost Laplacian symmetric). `scale` fixes the
/// residual target tolerance * scale; nonpositive scale falls back to the
/// norm of the reduced right-hand side.
template <typename Scalar>
Field<Scalar> cg_pinned(const PinMask& pinned, const Field<Scalar>& pinned_values,
                        const Field<Scalar>& rhs, Scalar scale, const GridSpec& g,
                        const EllipticSolveSpec& spec, const char* what) {
  const int cap = elliptic_cap(spec, g);
  const Field<Scalar> w = node_weights<Scalar>(g);
  const auto inner = [&w](const Field<Scalar>& a, const Field<Scalar>& b) -> Scalar {
    return (a * b * w).sum();
  };

  const Field<Scalar> zero = Field<Scalar>::Zero(g.ny, g.nx);
  const Field<Scalar> lifted = pinned.select(pinned_values, zero);
  Field<Scalar> lap(g.ny, g.nx);
  laplacian_neumann(lifted, g, lap);
  const Field<Scalar> b = pinned.select(zero, rhs + lap);

  const Scalar bnorm = std::sqrt(std::max(Scalar(0), inner(b, b)));
  const Scalar target = Scalar(spec.tolerance) * (scale > Scalar(0) ? scale : bnorm);
  if (bnorm <= target) return lifted;

  Field<Scalar> x = zero;
  Field<Scalar> r = b;
  Field<Scalar> dir = r;
  Field<Scalar> adir(g.ny, g.nx);
  Scalar rr = inner(r, r);
  for (int it = 0; it < cap; ++it) {
    laplacian_neumann(dir, g, lap);
    adir = pinned.select(zero, -lap);
    const Scalar curvature = inner(dir, adir);
    if (!(curvature > Scalar(0)))
      throw DivergenceError(std::string(what) + ": conjugate gradient breakdown (nonpositive curvature)");
    const Scalar alpha = rr / curvature;
    x += alpha * dir;
    r -= alpha * adir;
    const Scalar rr_next = inner(r, r);
    if (std::sqrt(std::max(Scalar(0), rr_next)) <= target) return (lifted + x).eval();
    dir = r + (rr_next / rr) * dir;
    rr = rr_next;
  }
  throw_elliptic_stall(what, static_cast<double>(std::sqrt(std::max(Scalar(0), rr)) /
                                                 (scale > Scalar(0) ? scale : bnorm)),
                       cap);
}

}  // namespace detail

/// @brief Discrete-harmonic extension of boundary data into the square:
/// Dirichlet pins the whole perimeter, Mixed pins the slots `gamma` marks and
/// imposes homogeneous mirror-ghost Neumann conditions on the rest. `bdata`
/// holds one value per perimeter slot; entries off the pinned set are
/// ignored. The residual target is tolerance times the arc-length-weighted
/// norm of the pinned data.
template <typename Scalar>
Field<Scalar> harmonic_extension(const Eigen::Array<Scalar, Eigen::Dynamic, 1>& bdata,
                                 const GridSpec& g, const PerimeterMap& p,
                                 const EllipticSolveSpec& spec,
                                 const GammaMask* gamma = nullptr) {
  if (p.nx != g.nx || p.ny != g.ny)
    throw ValidationError("harmonic_extension: perimeter map does not match the grid");
  if (bdata.size() != p.n())
    throw ValidationError("harmonic_extension: boundary data size does not match the perimeter");
  if (!bdata.isFinite().all())
    throw ValidationError("harmonic_extension: boundary data must be finite");
  if (spec.bc == EllipticBC::Mixed) {
    if (gamma == nullptr || gamma->on.size() != p.n())
      throw ValidationError("harmonic_extension: mixed kind needs a gamma mask over the perimeter");
    if (!gamma->on.any())
      throw ValidationError("harmonic_extension: mixed kind needs a nonempty pinned boundary set");
  }

  detail::PinMask pinned = detail::PinMask::Constant(g.ny, g.nx, false);
  Field<Scalar> values = Field<Scalar>::Zero(g.ny, g.nx);
  Scalar data_sq = 0;
  for (int k = 0; k < p.n(); ++k) {
    if (spec.bc == EllipticBC::Mixed && !gamma->on(k)) continue;
    pinned(p.iy(k), p.ix(k)) = true;
    values(p.iy(k), p.ix(k)) = bdata(k);
    data_sq += bdata(k) * bdata(k) * Scalar(g.dx);
  }
  const Scalar scale = std::sqrt(data_sq);
  const Field<Scalar> rhs = Field<Scalar>::Zero(g.ny, g.nx);
  return detail::cg_pinned(pinned, values, rhs, scale, g, spec, "harmonic_extension");
}

/// @brief Gradient-orthogonal projection onto fields vanishing outside the
/// strict interior of `box`: solves lap(h) = lap(f) there with h = 0 on the
/// box frame and returns h extended by zero. The box must keep at least one
/// node of clearance from the grid edge so the plain 5-point stencil governs
/// every free node.
template <typename Scalar>
Field<Scalar> project_pi0(const Field<Scalar>& f, const InteriorBox& box, const GridSpec& g,
                          const EllipticSolveSpec& spec) {
  if (f.rows() != g.ny || f.cols() != g.nx)
    throw ValidationError("project_pi0: field shape does not match the grid");
  if (box.i0 < 1 || box.j0 < 1 || box.i1 > g.nx - 2 || box.j1 > g.ny - 2)
    throw ValidationError("project_pi0: interior box must stay clear of the grid edge");
  if (box.i1 - box.i0 < 2 || box.j1 - box.j0 < 2)
    throw ValidationError("project_pi0: interior box has no interior nodes");

  detail::PinMask pinned = detail::PinMask::Constant(g.ny, g.nx, true);
  pinned.block(box.j0 + 1, box.i0 + 1, box.nyi() - 2, box.nxi() - 2).setConstant(false);
  const Field<Scalar> zero = Field<Scalar>::Zero(g.ny, g.nx);
  Field<Scalar> lapf(g.ny, g.nx);
  laplacian_neumann(f, g, lapf);
  return detail::cg_pinned(pinned, zero, (-lapf).eval(), Scalar(0), g, spec, "project_pi0");
}

}  // namespace mwt
