#pragma once

#include <chrono>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "mwtomo/boundary.hpp"
#include "mwtomo/elliptic.hpp"
#include "mwtomo/errors.hpp"
#include "mwtomo/fields.hpp"
#include "mwtomo/grid.hpp"
#include "mwtomo/iteration_log.hpp"
#include "mwtomo/parallel.hpp"
#include "mwtomo/wave.hpp"

namespace mwt {

// ---------------------------------------------------------------------------
// Averaged time reversal
// ---------------------------------------------------------------------------
//
// The building block is the reversal field at terminal level tau: a backward
// Dirichlet solve driven by h(t) - h(tau) up to tau with zero terminal state,
// plus the harmonic extension of h(tau). Averaging those fields against a
// unit-mass weight in tau and projecting onto fields that vanish outside the
// interior box yields one application of the reconstruction operator; the
// harmonic-extension terms are dropped there because the projection of a
// harmonic field is zero. Iterating "add the averaged reversal of the data
// mismatch" inverts the measurement map as a Neumann series.

/// How the reversal treats the unobserved part of the boundary: Full requires
/// every slot observed; PartialZero extends the data by zero and keeps the
/// all-Dirichlet reversal; PartialZaremba pins only the observed slots and
/// leaves the mirror zero-Neumann condition (and the mixed harmonic
/// extension) on the rest.
enum class TimeReversalMode { Full, PartialZero, PartialZaremba };

inline const char* time_reversal_mode_name(TimeReversalMode mode) {
  switch (mode) {
    case TimeReversalMode::Full: return "full";
    case TimeReversalMode::PartialZero: return "partial-zero";
    default: return "partial-zaremba";
  }
}

/// Quadrature nodes for the tau average: time-step indices plus weight
/// samples chi(tau_j). Trapezoid weights over the node times must integrate
/// chi to one (a single node acts as a point evaluation with unit weight).
struct AveragingSpec {
  Eigen::ArrayXi steps;
  Eigen::ArrayXd chi;
};

/// Trapezoid weights over the node times; a single node gets weight one.
inline Eigen::ArrayXd averaging_quad_weights(const AveragingSpec& avg, const GridSpec& g) {
  const int n = static_cast<int>(avg.steps.size());
  Eigen::ArrayXd w(n);
  if (n == 1) {
    w(0) = 1.0;
    return w;
  }
  for (int j = 0; j < n; ++j) {
    const double lo = j == 0 ? g.t(avg.steps(0)) : g.t(avg.steps(j - 1));
    const double hi = j == n - 1 ? g.t(avg.steps(n - 1)) : g.t(avg.steps(j + 1));
    w(j) = 0.5 * (hi - lo);
  }
  return w;
}

namespace detail {

inline void check_averaging(const AveragingSpec& avg, const GridSpec& g) {
  const int n = static_cast<int>(avg.steps.size());
  if (n < 1 || avg.chi.size() != n)
    throw ValidationError("averaging: need matching, nonempty node and weight arrays");
  for (int j = 0; j < n; ++j) {
    if (avg.steps(j) < 1 || avg.steps(j) > g.nt)
      throw ValidationError("averaging: quadrature nodes must lie in (0, t_final]");
    if (j > 0 && avg.steps(j) <= avg.steps(j - 1))
      throw ValidationError("averaging: quadrature nodes must be strictly increasing");
  }
  if (!avg.chi.isFinite().all() || (avg.chi < 0.0).any())
    throw ValidationError("averaging: weight samples must be finite and nonnegative");
  const double mass = (averaging_quad_weights(avg, g) * avg.chi).sum();
  if (std::abs(mass - 1.0) > 1e-10)
    throw ValidationError("averaging: weight must integrate to one over the nodes");
}

inline void check_reversal_inputs(const BoundaryTrace<double>& h, const GridSpec& g,
                                  const PerimeterMap& p, TimeReversalMode mode) {
  if (p.nx != g.nx || p.ny != g.ny)
    throw ValidationError("time_reversal: perimeter map does not match the grid");
  if (h.values.rows() != g.nt + 1 || h.values.cols() != p.n())
    throw ValidationError("time_reversal: trace shape does not match the grid and perimeter");
  if (h.gamma.on.size() != p.n())
    throw ValidationError("time_reversal: gamma mask does not match the perimeter");
  if (mode == TimeReversalMode::Full && !h.gamma.on.all())
    throw ValidationError("time_reversal: full mode needs the whole perimeter observed");
  if (!h.gamma.on.any())
    throw ValidationError("time_reversal: gamma mask selects no boundary slots");
}

/// Reversal-window data H(tau - t)(h(t) - h(tau)) for levels 0..tau.
inline TraceXd reversal_window(const TraceXd& values, int tau_step) {
  TraceXd data = values.topRows(tau_step + 1);
  data.rowwise() -= values.row(tau_step);
  return data;
}

}  // namespace detail

/// @brief One time reversal from level tau_step: backward Dirichlet solve of
/// the windowed data plus the harmonic extension of h(tau). The elliptic
/// spec's bc field is overridden to match the mode.
inline FieldXd time_reversal_A(const BoundaryTrace<double>& h, int tau_step, const FieldXd& c,
                               const GridSpec& g, const PerimeterMap& p, TimeReversalMode mode,
                               const EllipticSolveSpec& es = {}) {
  detail::check_reversal_inputs(h, g, p, mode);
  if (tau_step < 1 || tau_step > g.nt)
    throw ValidationError("time_reversal: reversal level must lie in (0, t_final]");

  TraceXd values = h.values;
  zero_outside(values, h.gamma);
  const TraceXd data = detail::reversal_window(values, tau_step);
  const FieldXd zero = FieldXd::Zero(g.ny, g.nx);
  const bool zaremba = mode == TimeReversalMode::PartialZaremba;
  const FieldXd tilde0 =
      dirichlet_reversal_solve(data, zero, c, g, p, tau_step, zaremba ? &h.gamma : nullptr);

  EllipticSolveSpec ext = es;
  ext.bc = zaremba ? EllipticBC::Mixed : EllipticBC::Dirichlet;
  const Eigen::ArrayXd bdata = values.row(tau_step).transpose();
  const FieldXd extension =
      harmonic_extension<double>(bdata, g, p, ext, zaremba ? &h.gamma : nullptr);
  return tilde0 + extension;
}

/// @brief The averaged, projected reversal: trapezoid quadrature of the
/// windowed reversal fields against chi, then the gradient projection onto
/// fields vanishing outside `box`. The harmonic-extension terms are skipped
/// because their projection vanishes. Node solves run concurrently on up to
/// `threads` workers; the reduction order is fixed, so results do not depend
/// on the thread count.
inline FieldXd averaged_A0(const BoundaryTrace<double>& h, const AveragingSpec& avg,
                           const InteriorBox& box, const FieldXd& c, const GridSpec& g,
                           const PerimeterMap& p, TimeReversalMode mode,
                           const EllipticSolveSpec& es = {}, int threads = 1) {
  detail::check_reversal_inputs(h, g, p, mode);
  detail::check_averaging(avg, g);

  TraceXd values = h.values;
  zero_outside(values, h.gamma);
  const Eigen::ArrayXd quad = averaging_quad_weights(avg, g);
  const FieldXd zero = FieldXd::Zero(g.ny, g.nx);
  const bool zaremba = mode == TimeReversalMode::PartialZaremba;
  const int n_nodes = static_cast<int>(avg.steps.size());

  std::vector<FieldXd> fields(n_nodes);
  parallel_for(n_nodes, threads, [&](int j) {
    const TraceXd data = detail::reversal_window(values, avg.steps(j));
    fields[j] = dirichlet_reversal_solve(data, zero, c, g, p, avg.steps(j),
                                         zaremba ? &h.gamma : nullptr);
  });

  FieldXd acc = zero;
  for (int j = 0; j < n_nodes; ++j) acc += (quad(j) * avg.chi(j)) * fields[j];

  EllipticSolveSpec proj = es;
  proj.bc = EllipticBC::Dirichlet;
  return project_pi0(acc, box, g, proj);
}

/// @brief Default tau weight: `count` nodes uniform on [lo_fraction*T, T]
/// snapped to time steps, carrying a cubic-taper bump normalized to unit mass
/// against its own trapezoid weights. A single node degenerates to a point
/// evaluation at T.
inline AveragingSpec averaging_bump(const GridSpec& g, int count = 32, double lo_fraction = 0.1) {
  if (count < 1) throw ValidationError("averaging_bump: need at least one node");
  if (!(lo_fraction >= 0.0) || lo_fraction >= 1.0)
    throw ValidationError("averaging_bump: lo_fraction must lie in [0, 1)");
  AveragingSpec avg;
  if (count == 1) {
    avg.steps = Eigen::ArrayXi::Constant(1, g.nt);
    avg.chi = Eigen::ArrayXd::Constant(1, 1.0);
    return avg;
  }
  const double a = lo_fraction * g.t_final();
  const double b = g.t_final();
  avg.steps.resize(count);
  avg.chi.resize(count);
  for (int j = 0; j < count; ++j) {
    const double tau = a + (b - a) * j / (count - 1);
    avg.steps(j) = static_cast<int>(std::lround(tau / g.dt));
    if (avg.steps(j) < 1 || (j > 0 && avg.steps(j) <= avg.steps(j - 1)))
      throw ValidationError("averaging_bump: time grid too coarse for the requested node count");
    const double s = std::max(0.0, (g.t(avg.steps(j)) - a) * (b - g.t(avg.steps(j))));
    avg.chi(j) = s * s * s;
  }
  const double mass = (averaging_quad_weights(avg, g) * avg.chi).sum();
  if (!(mass > 0.0)) throw ValidationError("averaging_bump: weight bump has zero mass");
  avg.chi /= mass;
  return avg;
}

/// @brief Tail-weighted tau average: `count` nodes uniform on
/// [lo_fraction*T, T], chi rising from zero over a quintic-smoothstep ramp of
/// width ramp_fraction*T and then flat through T, normalized to unit mass.
/// Unlike the bump, chi(T) > 0, which favors the longest reversal windows;
/// the weight is still smooth because only its mass over [0, T] is
/// constrained. Works better than the bump when T is too short for
/// stability.
inline AveragingSpec averaging_ramp(const GridSpec& g, int count = 16, double lo_fraction = 0.5,
                                    double ramp_fraction = 0.3) {
  if (count < 2) throw ValidationError("averaging_ramp: need at least two nodes");
  if (!(lo_fraction >= 0.0) || lo_fraction >= 1.0)
    throw ValidationError("averaging_ramp: lo_fraction must lie in [0, 1)");
  if (!(ramp_fraction > 0.0) || lo_fraction + ramp_fraction > 1.0)
    throw ValidationError("averaging_ramp: ramp must fit between lo_fraction*T and T");
  AveragingSpec avg;
  const double a = lo_fraction * g.t_final();
  const double b = g.t_final();
  const double width = ramp_fraction * g.t_final();
  avg.steps.resize(count);
  avg.chi.resize(count);
  for (int j = 0; j < count; ++j) {
    const double tau = a + (b - a) * j / (count - 1);
    avg.steps(j) = static_cast<int>(std::lround(tau / g.dt));
    if (avg.steps(j) < 1 || (j > 0 && avg.steps(j) <= avg.steps(j - 1)))
      throw ValidationError("averaging_ramp: time grid too coarse for the requested node count");
    const double s = std::min(1.0, std::max(0.0, (g.t(avg.steps(j)) - a) / width));
    avg.chi(j) = s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
  }
  const double mass = (averaging_quad_weights(avg, g) * avg.chi).sum();
  if (!(mass > 0.0)) throw ValidationError("averaging_ramp: weight has zero mass");
  avg.chi /= mass;
  return avg;
}

struct AtrResult {
  FieldXd f;
  IterationLog log;
  RunStatus status = RunStatus::Completed;
  int steps_done = 0;
};

/// @brief Neumann-series inversion: f_1 = A0 h, f_n = f_{n-1} + A0(h - L f_{n-1}).
/// The logged residual is the weighted-L2 norm of each update, which equals
/// the averaged-reversal image of the current data mismatch; rel_error and
/// rel_error_hd compare against `truth` when supplied. A non-finite update or
/// an iterate blowing past 1e12 times the first update's norm stops the run
/// with Diverged status.
inline AtrResult atr_iterate(const BoundaryTrace<double>& m, int steps, const AveragingSpec& avg,
                             const InteriorBox& box, const FieldXd& c, const GridSpec& g,
                             const PerimeterMap& p, TimeReversalMode mode,
                             const EllipticSolveSpec& es = {},
                             const FieldXd* truth = nullptr, int threads = 1) {
  if (steps < 1) throw ValidationError("atr_iterate: need at least one step");
  double truth_norm = 0.0, truth_hd = 0.0;
  if (truth) {
    truth_norm = weighted_norm(*truth, c, g);
    truth_hd = hd_seminorm(*truth, g);
    if (truth_norm == 0.0 || truth_hd == 0.0)
      throw ValidationError("atr_iterate: truth field has zero norm");
  }

  const auto t_start = std::chrono::steady_clock::now();
  const auto elapsed = [&t_start]() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  };

  AtrResult out;
  out.f = FieldXd::Zero(g.ny, g.nx);
  out.log.reserve(steps);
  double guard = 0.0;
  BoundaryTrace<double> mismatch{m.values, m.gamma};
  const ForwardOptions trace_only{true, false, 0};

  for (int n = 1; n <= steps; ++n) {
    if (n > 1) {
      mismatch.values = m.values - forward_solve(out.f, c, g, p, trace_only).trace;
    }
    const FieldXd update = averaged_A0(mismatch, avg, box, c, g, p, mode, es, threads);
    if (!update.allFinite()) {
      out.status = RunStatus::Diverged;
      break;
    }
    out.f += update;
    out.steps_done = n;
    if (n == 1) guard = 1e12 * std::max(weighted_norm(update, c, g), 1e-300);

    IterationEntry entry;
    entry.step = n;
    entry.residual = weighted_norm(update, c, g);
    if (truth) {
      entry.rel_error = weighted_norm((out.f - *truth).eval(), c, g) / truth_norm;
      entry.rel_error_hd = hd_seminorm((out.f - *truth).eval(), g) / truth_hd;
    }
    entry.seconds = elapsed();
    out.log.push_back(entry);
    if (weighted_norm(out.f, c, g) > guard) {
      out.status = RunStatus::Diverged;
      break;
    }
  }
  return out;
}

}  // namespace mwt
