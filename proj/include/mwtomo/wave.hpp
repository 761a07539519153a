#pragma once

#include <string>
#include <vector>

#include "mwtomo/boundary.hpp"
#include "mwtomo/fields.hpp"
#include "mwtomo/grid.hpp"

namespace mwt {

// ---------------------------------------------------------------------------
// Stencils
// ---------------------------------------------------------------------------

/// @brief 5-point Laplacian with mirror (zero-Neumann) ghost nodes on every
/// side; corner nodes receive both reflections.
template <typename Scalar>
void laplacian_neumann(const Field<Scalar>& u, const GridSpec& g, Field<Scalar>& lap) {
  const int ny = g.ny, nx = g.nx;
  const Scalar ix2 = Scalar(1) / Scalar(g.dx * g.dx);
  const Scalar iy2 = Scalar(1) / Scalar(g.dy * g.dy);
  lap.resize(ny, nx);
  // x-direction (columns)
  lap.col(0) = (u.col(1) - u.col(0)) * (2 * ix2);
  lap.middleCols(1, nx - 2) =
      (u.leftCols(nx - 2) + u.rightCols(nx - 2) - 2 * u.middleCols(1, nx - 2)) * ix2;
  lap.col(nx - 1) = (u.col(nx - 2) - u.col(nx - 1)) * (2 * ix2);
  // y-direction (rows)
  lap.row(0) += (u.row(1) - u.row(0)) * (2 * iy2);
  lap.middleRows(1, ny - 2) +=
      (u.topRows(ny - 2) + u.bottomRows(ny - 2) - 2 * u.middleRows(1, ny - 2)) * iy2;
  lap.row(ny - 1) += (u.row(ny - 2) - u.row(ny - 1)) * (2 * iy2);
}

/// @brief Add inhomogeneous Neumann data to a mirror-ghost Laplacian: the
/// ghost value is the interior mirror plus 2*dx*g, so each boundary node
/// gains 2*g/dx per side it borders (corners border two and get both).
template <typename Scalar, typename RowExpr>
void add_neumann_data(const RowExpr& data_row, const PerimeterMap& p, const GridSpec& g, Field<Scalar>& lap) {
  const Scalar fx = Scalar(2.0 / g.dx);
  const Scalar fy = Scalar(2.0 / g.dy);
  const int ny = g.ny, nx = g.nx;
  for (int ix = 0; ix < nx; ++ix) {
    lap(0, ix) += fy * static_cast<Scalar>(data_row(p.slot(0, ix)));
    lap(ny - 1, ix) += fy * static_cast<Scalar>(data_row(p.slot(ny - 1, ix)));
  }
  for (int iy = 0; iy < ny; ++iy) {
    lap(iy, 0) += fx * static_cast<Scalar>(data_row(p.slot(iy, 0)));
    lap(iy, nx - 1) += fx * static_cast<Scalar>(data_row(p.slot(iy, nx - 1)));
  }
}

namespace detail {

template <typename Scalar>
void check_wave_inputs(const Field<Scalar>& state, const Field<Scalar>& c, const GridSpec& g,
                       const char* who) {
  if (state.rows() != g.ny || state.cols() != g.nx || c.rows() != g.ny || c.cols() != g.nx)
    throw ValidationError(std::string(who) + ": field shape does not match the grid");
  if (!state.allFinite()) throw ValidationError(std::string(who) + ": non-finite input field");
  const double c_max = c.template cast<double>().maxCoeff();
  if (!(c.template cast<double>().minCoeff() > 0.0))
    throw ValidationError(std::string(who) + ": speed must be positive everywhere");
  if (g.dt > cfl_limit(g.dx, c_max) * (1.0 + 1e-9))
    throw ValidationError(std::string(who) + ": time step violates the CFL bound for this speed");
}

template <typename Scalar>
void record_trace_row(const Field<Scalar>& u, const PerimeterMap& p, int n, Trace<Scalar>& tr) {
  for (int k = 0; k < p.n(); ++k) tr(n, k) = u(p.iy(k), p.ix(k));
}

inline void check_finite_state(bool finite, int step, const char* who) {
  if (!finite)
    throw DivergenceError(std::string(who) + ": non-finite state at step " + std::to_string(step));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Energy
// ---------------------------------------------------------------------------

namespace detail {

/// Edge-difference gradient pairing with trapezoid cross weights: the
/// quadratic form the mirror-ghost stencil is symmetric under. x-differences
/// carry the y trapezoid weight and vice versa, so boundary rows are not
/// double-counted against the interior.
template <typename Scalar>
double sbp_grad_inner(const Field<Scalar>& a, const Field<Scalar>& b, const GridSpec& g) {
  const Eigen::ArrayXd wx = axis_weights(g.nx, g.dx);
  const Eigen::ArrayXd wy = axis_weights(g.ny, g.dy);
  const FieldXd fa = a.template cast<double>();
  const FieldXd fb = b.template cast<double>();
  const int ny = g.ny, nx = g.nx;
  const FieldXd dax = (fa.rightCols(nx - 1) - fa.leftCols(nx - 1)) / g.dx;
  const FieldXd dbx = (fb.rightCols(nx - 1) - fb.leftCols(nx - 1)) / g.dx;
  double acc = (((dax * dbx).rowwise().sum()) * wy).sum() * g.dx;
  const FieldXd day = (fa.bottomRows(ny - 1) - fa.topRows(ny - 1)) / g.dy;
  const FieldXd dby = (fb.bottomRows(ny - 1) - fb.topRows(ny - 1)) / g.dy;
  acc += (((day * dby).colwise().sum()).transpose() * wx).sum() * g.dy;
  return acc;
}

}  // namespace detail

/// @brief Midpoint discrete energy of a leapfrog level pair: kinetic part in
/// the c^-2-weighted norm plus gradient energy of the midpoint field, both
/// with trapezoid quadrature. Stays on its plateau up to an O((omega dt)^2)
/// wiggle proportional to the data's frequency content.
template <typename Scalar>
double discrete_energy(const Field<Scalar>& u_new, const Field<Scalar>& u_old, const Field<Scalar>& c,
                       const GridSpec& g) {
  const FieldXd w = node_weights(g);
  const FieldXd vel = ((u_new - u_old).template cast<double>()) / g.dt;
  const double kinetic = (vel.square() / c.template cast<double>().square() * w).sum();
  const Field<Scalar> mid = Scalar(0.5) * (u_new + u_old);
  return 0.5 * (kinetic + detail::sbp_grad_inner(mid, mid, g));
}

/// @brief The quadratic form the leapfrog scheme conserves exactly (to
/// roundoff) for every CFL-compliant run: staggered kinetic term plus the
/// gradient pairing of the two levels.
template <typename Scalar>
double conserved_energy(const Field<Scalar>& u_new, const Field<Scalar>& u_old, const Field<Scalar>& c,
                        const GridSpec& g) {
  const FieldXd w = node_weights(g);
  const FieldXd vel = ((u_new - u_old).template cast<double>()) / g.dt;
  const double kinetic = (vel.square() / c.template cast<double>().square() * w).sum();
  return 0.5 * (kinetic + detail::sbp_grad_inner(u_new, u_old, g));
}

// ---------------------------------------------------------------------------
// Forward solve
// ---------------------------------------------------------------------------

struct ForwardOptions {
  bool record_trace = true;
  bool record_energy = false;
  int snapshot_every = 0;  // 0 = keep no snapshots
};

template <typename Scalar>
struct ForwardResult {
  Trace<Scalar> trace;                   // (nt+1) x n_perimeter when recorded
  std::vector<double> energy;            // one value per step when recorded
  std::vector<Field<Scalar>> snapshots;  // states at snapshot_steps
  std::vector<int> snapshot_steps;
};

/// @brief Leapfrog solve of u_tt = c^2 lap(u) with zero Neumann boundary,
/// u(0) = f, u_t(0) = 0. The start uses the half-step Taylor level
/// u^1 = u^0 + dt^2/2 c^2 lap(u^0); the trace records all nt+1 levels.
template <typename Scalar>
ForwardResult<Scalar> forward_solve(const Field<Scalar>& f, const Field<Scalar>& c, const GridSpec& g,
                                    const PerimeterMap& p, const ForwardOptions& opt = {}) {
  detail::check_wave_inputs(f, c, g, "forward_solve");
  ForwardResult<Scalar> out;
  if (opt.record_trace) out.trace.resize(g.nt + 1, p.n());
  const Field<Scalar> cdt2 = (c * c) * Scalar(g.dt * g.dt);
  Field<Scalar> u_prev = f;
  Field<Scalar> u_cur(g.ny, g.nx), lap(g.ny, g.nx);

  auto snap = [&](int n, const Field<Scalar>& u) {
    if (opt.snapshot_every > 0 && n % opt.snapshot_every == 0) {
      out.snapshots.push_back(u);
      out.snapshot_steps.push_back(n);
    }
  };

  if (opt.record_trace) detail::record_trace_row(u_prev, p, 0, out.trace);
  snap(0, u_prev);

  laplacian_neumann(u_prev, g, lap);
  u_cur = u_prev + Scalar(0.5) * cdt2 * lap;
  if (opt.record_trace) detail::record_trace_row(u_cur, p, 1, out.trace);
  if (opt.record_energy) out.energy.push_back(discrete_energy(u_cur, u_prev, c, g));
  snap(1, u_cur);

  for (int n = 1; n < g.nt; ++n) {
    laplacian_neumann(u_cur, g, lap);
    u_prev = 2 * u_cur - u_prev + cdt2 * lap;  // u_prev now holds u^{n+1}
    u_prev.swap(u_cur);
    detail::check_finite_state(u_cur.allFinite(), n + 1, "forward_solve");
    if (opt.record_trace) detail::record_trace_row(u_cur, p, n + 1, out.trace);
    if (opt.record_energy) out.energy.push_back(discrete_energy(u_cur, u_prev, c, g));
    snap(n + 1, u_cur);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Adjoint solve
// ---------------------------------------------------------------------------

/// @brief Backward wave solve driven by inhomogeneous Neumann data on the
/// whole boundary, with zero state and velocity at the final time; returns
/// -v_t(0) ~ -(v^1 - v^0)/dt. In the dt*dx trace pairing this realizes the
/// measurement adjoint directly; the measurement layer only adds the
/// interior cutoff.
template <typename Scalar>
Field<Scalar> adjoint_solve(const Trace<Scalar>& data, const Field<Scalar>& c, const GridSpec& g,
                            const PerimeterMap& p) {
  if (data.rows() != g.nt + 1 || data.cols() != p.n())
    throw ValidationError("adjoint_solve: trace shape does not match the grid");
  if (!data.allFinite()) throw ValidationError("adjoint_solve: non-finite trace data");
  const Field<Scalar> zero = Field<Scalar>::Zero(g.ny, g.nx);
  detail::check_wave_inputs(zero, c, g, "adjoint_solve");

  const Field<Scalar> cdt2 = (c * c) * Scalar(g.dt * g.dt);
  Field<Scalar> v_hi = zero;            // level n+1
  Field<Scalar> v_cur(g.ny, g.nx), lap(g.ny, g.nx);

  // Half-step start at t = t_final: state and velocity vanish, only the
  // boundary data drives the first level.
  lap.setZero();
  add_neumann_data(data.row(g.nt), p, g, lap);
  v_cur = Scalar(0.5) * cdt2 * lap;     // level nt-1

  for (int n = g.nt - 1; n >= 1; --n) {
    laplacian_neumann(v_cur, g, lap);
    add_neumann_data(data.row(n), p, g, lap);
    v_hi = 2 * v_cur - v_hi + cdt2 * lap;  // v_hi now holds level n-1
    v_hi.swap(v_cur);
    detail::check_finite_state(v_cur.allFinite(), n - 1, "adjoint_solve");
  }
  // v_cur = v^0, v_hi = v^1.
  return (v_cur - v_hi) / Scalar(g.dt);
}

// ---------------------------------------------------------------------------
// Transpose of the forward trace map
// ---------------------------------------------------------------------------

/// @brief Exact plain-l2 transpose of the map f -> full boundary trace of
/// forward_solve, obtained by running the leapfrog recursion backwards with
/// every step transposed. The mirror-ghost Laplacian is symmetrized by the
/// scale-free trapezoid conjugation D (1/2 on edge lines), so each transposed
/// step costs one stencil application like a forward step. adjoint_solve
/// realizes the continuum reversal instead and differs at grid frequencies
/// where the scheme's dispersion no longer cancels.
template <typename Scalar>
Field<Scalar> transpose_solve(const Trace<Scalar>& data, const Field<Scalar>& c, const GridSpec& g,
                              const PerimeterMap& p) {
  if (data.rows() != g.nt + 1 || data.cols() != p.n())
    throw ValidationError("transpose_solve: trace shape does not match the grid");
  if (!data.allFinite()) throw ValidationError("transpose_solve: non-finite trace data");
  const Field<Scalar> zero = Field<Scalar>::Zero(g.ny, g.nx);
  detail::check_wave_inputs(zero, c, g, "transpose_solve");

  const Field<Scalar> cdt2 = (c * c) * Scalar(g.dt * g.dt);
  Field<Scalar> D = Field<Scalar>::Ones(g.ny, g.nx);
  D.row(0) *= Scalar(0.5);
  D.row(g.ny - 1) *= Scalar(0.5);
  D.col(0) *= Scalar(0.5);
  D.col(g.nx - 1) *= Scalar(0.5);

  Field<Scalar> tmp(g.ny, g.nx), lap(g.ny, g.nx);
  // K = diag(c^2 dt^2) lap, so K^T v = D lap(D^-1 c^2 dt^2 v).
  auto apply_KT = [&](const Field<Scalar>& v, Field<Scalar>& out) {
    tmp = (cdt2 * v) / D;
    laplacian_neumann(tmp, g, lap);
    out = lap * D;
  };
  auto scatter = [&](int level, Field<Scalar>& v) {
    for (int k = 0; k < p.n(); ++k) v(p.iy(k), p.ix(k)) += data(level, k);
  };

  // lam_1 and lam_2 run the transposed two-level recursion
  // lam_n = E^T data_n + (2I + K^T) lam_{n+1} - lam_{n+2} down from n = nt.
  Field<Scalar> lam_1 = zero, lam_2 = zero, lam(g.ny, g.nx);
  for (int n = g.nt; n >= 1; --n) {
    apply_KT(lam_1, lam);
    lam += 2 * lam_1 - lam_2;
    scatter(n, lam);
    detail::check_finite_state(lam.allFinite(), n, "transpose_solve");
    lam_2.swap(lam_1);
    lam_1.swap(lam);
  }
  // The first forward level is u^1 = (I + K/2) u^0, so the transpose closes
  // with E^T data_0 + (I + K^T/2) lam_1 - lam_2.
  apply_KT(lam_1, lam);
  Field<Scalar> out = lam_1 + Scalar(0.5) * lam - lam_2;
  scatter(0, out);
  return out;
}

// ---------------------------------------------------------------------------
// Dirichlet time reversal
// ---------------------------------------------------------------------------

/// @brief Backward solve from time index n_tau with the boundary state pinned
/// to the rows of h. v(tau) = terminal (boundary overwritten by h(tau)),
/// v_t(tau) = 0. With mixed_gamma, only mask slots are pinned and every other
/// boundary node keeps the mirror zero-Neumann condition. Returns v(0).
template <typename Scalar>
Field<Scalar> dirichlet_reversal_solve(const Trace<Scalar>& h, const Field<Scalar>& terminal,
                                       const Field<Scalar>& c, const GridSpec& g, const PerimeterMap& p,
                                       int n_tau, const GammaMask* mixed_gamma = nullptr) {
  detail::check_wave_inputs(terminal, c, g, "dirichlet_reversal_solve");
  if (n_tau < 1 || n_tau > g.nt)
    throw ValidationError("dirichlet_reversal_solve: reversal time must lie in (0, t_final]");
  if (h.rows() < n_tau + 1 || h.cols() != p.n())
    throw ValidationError("dirichlet_reversal_solve: boundary data does not cover the reversal window");
  if (!h.allFinite()) throw ValidationError("dirichlet_reversal_solve: non-finite boundary data");

  auto pin = [&](Field<Scalar>& v, int level) {
    for (int k = 0; k < p.n(); ++k)
      if (!mixed_gamma || mixed_gamma->on(k)) v(p.iy(k), p.ix(k)) = h(level, k);
  };

  const Field<Scalar> cdt2 = (c * c) * Scalar(g.dt * g.dt);
  Field<Scalar> v_hi = terminal;  // level n_tau
  pin(v_hi, n_tau);
  Field<Scalar> v_cur(g.ny, g.nx), lap(g.ny, g.nx);

  // Half-step start with zero velocity at tau. Unpinned boundary nodes evolve
  // with the mirror stencil; pinned ones are overwritten afterwards.
  laplacian_neumann(v_hi, g, lap);
  v_cur = v_hi + Scalar(0.5) * cdt2 * lap;
  pin(v_cur, n_tau - 1);

  for (int n = n_tau - 1; n >= 1; --n) {
    laplacian_neumann(v_cur, g, lap);
    v_hi = 2 * v_cur - v_hi + cdt2 * lap;  // now level n-1
    v_hi.swap(v_cur);
    pin(v_cur, n - 1);
    detail::check_finite_state(v_cur.allFinite(), n - 1, "dirichlet_reversal_solve");
  }
  return v_cur;
}

}  // namespace mwt
