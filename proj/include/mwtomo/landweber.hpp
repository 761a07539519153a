#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <type_traits>
#include <utility>
#include <vector>

#include "mwtomo/errors.hpp"
#include "mwtomo/iteration_log.hpp"

namespace mwt {

// ---------------------------------------------------------------------------
// Step-size theory
// ---------------------------------------------------------------------------

/// @brief Two-sided spectral bounds mu2 <= L*L <= L2norm for the measurement
/// map, the inputs to the step-size formulas.
struct SpectralBounds {
  double mu2 = 0.0;
  double L2norm = 0.0;
};

namespace detail {

inline void check_bounds(const SpectralBounds& b, const char* who) {
  if (!(b.L2norm > 0.0)) throw ValidationError(std::string(who) + ": upper bound must be positive");
  if (!(b.mu2 >= 0.0) || b.mu2 > b.L2norm)
    throw ValidationError(std::string(who) + ": bounds must satisfy 0 <= mu2 <= L2norm");
}

}  // namespace detail

/// @brief Step size maximizing the worst-case contraction rate: 2/(mu2 + L2norm).
inline double gamma_star(const SpectralBounds& b) {
  detail::check_bounds(b, "gamma_star");
  return 2.0 / (b.mu2 + b.L2norm);
}

/// @brief Worst-case norm of the error propagator I - gamma L*L over the
/// spectral interval: max(|1 - gamma L2norm|, 1 - gamma mu2).
inline double contraction_norm(double gamma, const SpectralBounds& b) {
  detail::check_bounds(b, "contraction_norm");
  if (!(gamma > 0.0)) throw ValidationError("contraction_norm: gamma must be positive");
  return std::max(std::abs(1.0 - gamma * b.L2norm), 1.0 - gamma * b.mu2);
}

/// @brief Guaranteed per-step error reduction nu = min(gamma mu2, 2 - gamma L2norm);
/// nu <= 0 signals the divergent step-size regime.
inline double convergence_rate(double gamma, const SpectralBounds& b) {
  detail::check_bounds(b, "convergence_rate");
  if (!(gamma > 0.0)) throw ValidationError("convergence_rate: gamma must be positive");
  return std::min(gamma * b.mu2, 2.0 - gamma * b.L2norm);
}

// ---------------------------------------------------------------------------
// Iteration engine
// ---------------------------------------------------------------------------

/// @brief Operator handles the engine iterates with. The engine never sees a
/// grid: FieldVec/DataVec only need linear arithmetic, and the two inner
/// products define the geometry. `normal` must be (approximately) the
/// composition adjoint(forward(.)) with respect to those pairings; it is a
/// separate handle because composed implementations can fuse cutoffs and
/// filters that the plain forward map does not carry.
template <typename FieldVec, typename DataVec>
struct OperatorPair {
  std::function<DataVec(const FieldVec&)> forward;
  std::function<FieldVec(const FieldVec&)> normal;
  std::function<FieldVec(const DataVec&)> adjoint;
  std::function<double(const FieldVec&, const FieldVec&)> field_inner;
  std::function<double(const DataVec&, const DataVec&)> data_inner;
};

/// @brief Discrepancy principle: stop once residual < C * delta.
struct StoppingRule {
  double C = 1.5;
  double delta = 0.0;
};

struct LandweberConfig {
  double gamma = 0.05;
  int max_steps = 50;
  int log_every = 1;
  std::optional<StoppingRule> stop;
};

template <typename FieldVec>
struct LandweberResult {
  FieldVec f;
  IterationLog log;
  RunStatus status = RunStatus::Completed;
  int steps_done = 0;
};

/// @brief Landweber iteration f <- f - gamma (normal(f) - adjoint(m)) from f0
/// (zero when omitted). The data-space residual ||forward(f) - m|| costs one
/// extra forward application, so it is evaluated only on logged steps and,
/// when a stopping rule is set, on every step. Divergence (non-finite
/// iterate, or norm beyond 1e12 times the data scale) ends the run with
/// status Diverged instead of throwing, so step-size sweeps can record and
/// survive unstable runs.
template <typename FieldVec, typename DataVec>
LandweberResult<FieldVec> landweber_iterate(
    const DataVec& m, const OperatorPair<FieldVec, DataVec>& ops, const LandweberConfig& cfg,
    const std::type_identity_t<FieldVec>* f0 = nullptr,
    const std::type_identity_t<FieldVec>* truth = nullptr,
    const std::function<double(const FieldVec&)>* aux_error = nullptr) {
  if (!(cfg.gamma > 0.0)) throw ValidationError("landweber_iterate: gamma must be positive");
  if (cfg.max_steps < 1) throw ValidationError("landweber_iterate: max_steps must be >= 1");
  if (cfg.log_every < 1) throw ValidationError("landweber_iterate: log_every must be >= 1");
  if (cfg.stop && !(cfg.stop->C > 1.0 && cfg.stop->delta >= 0.0))
    throw ValidationError("landweber_iterate: stopping rule needs C > 1 and delta >= 0");

  const auto t_start = std::chrono::steady_clock::now();
  auto seconds = [&t_start] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  };

  const FieldVec b = ops.adjoint(m);
  const double m_norm = std::sqrt(std::max(0.0, ops.data_inner(m, m)));
  const double guard = 1e12 * std::max(m_norm, 1e-300);

  FieldVec f = f0 ? *f0 : FieldVec(0.0 * b);
  const double truth_norm = truth ? std::sqrt(ops.field_inner(*truth, *truth)) : 0.0;

  LandweberResult<FieldVec> out;
  auto residual_norm = [&] {
    const DataVec r = ops.forward(f) - m;
    return std::sqrt(std::max(0.0, ops.data_inner(r, r)));
  };
  auto log_state = [&](int step, double residual) {
    IterationEntry e;
    e.step = step;
    e.residual = residual;
    if (truth && truth_norm > 0.0) {
      const FieldVec diff = f - *truth;
      e.rel_error = std::sqrt(std::max(0.0, ops.field_inner(diff, diff))) / truth_norm;
      if (aux_error && *aux_error) e.rel_error_hd = (*aux_error)(f);
    }
    e.seconds = seconds();
    out.log.push_back(e);
  };

  log_state(0, residual_norm());
  for (int step = 1; step <= cfg.max_steps; ++step) {
    const FieldVec nf = ops.normal(f);
    f -= cfg.gamma * (nf - b);
    const double f_norm_sq = ops.field_inner(f, f);
    if (!std::isfinite(f_norm_sq) || std::sqrt(f_norm_sq) > guard) {
      out.steps_done = step;
      out.status = RunStatus::Diverged;
      out.f = std::move(f);
      return out;
    }
    out.steps_done = step;
    const bool want_log = (step % cfg.log_every == 0) || step == cfg.max_steps;
    if (want_log || cfg.stop) {
      const double residual = residual_norm();
      if (want_log) log_state(step, residual);
      if (cfg.stop && residual < cfg.stop->C * cfg.stop->delta) {
        out.status = RunStatus::DiscrepancyStop;
        if (!want_log) log_state(step, residual);
        break;
      }
    }
  }
  out.f = std::move(f);
  return out;
}

// ---------------------------------------------------------------------------
// Spectral-bound estimation
// ---------------------------------------------------------------------------

template <typename FieldVec>
struct BoundsEstimate {
  SpectralBounds bounds;
  bool converged = false;
  int applications = 0;
  FieldVec top_vector;
};

/// @brief Power iteration on the normal operator: the largest Rayleigh
/// quotient in the pairing that makes the operator self-adjoint estimates the
/// squared operator norm of the measurement map. mu2 is left at zero (a
/// certified lower bound needs the spectral lab).
template <typename FieldVec>
BoundsEstimate<FieldVec> estimate_bounds(
    const std::function<FieldVec(const FieldVec&)>& normal_op, const FieldVec& seed_vector,
    const std::function<double(const FieldVec&, const FieldVec&)>& inner, double tol = 1e-4,
    int max_applications = 200) {
  if (!(tol > 0.0)) throw ValidationError("estimate_bounds: tolerance must be positive");
  if (max_applications < 2) throw ValidationError("estimate_bounds: need at least two applications");

  BoundsEstimate<FieldVec> out;
  FieldVec v = seed_vector;
  double v_norm = std::sqrt(inner(v, v));
  if (!(v_norm > 0.0)) throw ValidationError("estimate_bounds: seed vector must be nonzero");
  v /= v_norm;

  double lambda_prev = 0.0;
  while (out.applications < max_applications) {
    FieldVec nv = normal_op(v);
    ++out.applications;
    const double lambda = inner(nv, v);
    const double nv_norm = std::sqrt(inner(nv, nv));
    if (!(nv_norm > 0.0)) {
      out.bounds.L2norm = 0.0;
      out.top_vector = std::move(v);
      return out;
    }
    v = nv / nv_norm;
    if (out.applications > 1 && std::abs(lambda - lambda_prev) <= tol * std::abs(lambda)) {
      out.bounds.L2norm = lambda;
      out.converged = true;
      out.top_vector = std::move(v);
      return out;
    }
    lambda_prev = lambda;
  }
  out.bounds.L2norm = lambda_prev;
  out.top_vector = std::move(v);
  return out;
}

/// @brief Deterministic rough-random seed field for power iteration.
template <typename FieldVec>
FieldVec power_seed(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  FieldVec v(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i)
      v(i, j) = (static_cast<double>(rng() >> 11) * 0x1p-53) * 2.0 - 1.0;
  return v;
}

// ---------------------------------------------------------------------------
// Noise-amplification diagnostic
// ---------------------------------------------------------------------------

/// @brief g_N(lambda) = (1 - (1 - gamma lambda^2)^N) / lambda, the factor by
/// which N steps amplify data noise carried by a singular value lambda;
/// g_N(0) = 0 by the limit.
inline double gn_value(double gamma, int N, double lambda) {
  if (!(gamma > 0.0)) throw ValidationError("gn_value: gamma must be positive");
  if (N < 1) throw ValidationError("gn_value: N must be >= 1");
  if (!(lambda >= 0.0)) throw ValidationError("gn_value: lambda must be >= 0");
  if (lambda == 0.0) return 0.0;
  return (1.0 - std::pow(1.0 - gamma * lambda * lambda, N)) / lambda;
}

inline std::vector<double> gn_curve(double gamma, int N, const std::vector<double>& lambdas) {
  std::vector<double> out;
  out.reserve(lambdas.size());
  for (double l : lambdas) out.push_back(gn_value(gamma, N, l));
  return out;
}

/// @brief Locate the maximum of g_N on [0, sqrt(2/gamma)]: coarse scan, then
/// golden-section refinement between the neighbors of the best sample.
inline std::pair<double, double> gn_max(double gamma, int N, int samples = 2048) {
  if (samples < 8) throw ValidationError("gn_max: need at least 8 samples");
  const double hi = std::sqrt(2.0 / gamma);
  double best_l = 0.0, best_v = 0.0;
  int best_i = 0;
  for (int i = 0; i <= samples; ++i) {
    const double l = hi * i / samples;
    const double v = gn_value(gamma, N, l);
    if (v > best_v) {
      best_v = v;
      best_l = l;
      best_i = i;
    }
  }
  double a = hi * std::max(0, best_i - 1) / samples;
  double b = hi * std::min(samples, best_i + 1) / samples;
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
  double v1 = gn_value(gamma, N, x1), v2 = gn_value(gamma, N, x2);
  for (int it = 0; it < 80 && (b - a) > 1e-14 * hi; ++it) {
    if (v1 < v2) {
      a = x1;
      x1 = x2;
      v1 = v2;
      x2 = a + phi * (b - a);
      v2 = gn_value(gamma, N, x2);
    } else {
      b = x2;
      x2 = x1;
      v2 = v1;
      x1 = b - phi * (b - a);
      v1 = gn_value(gamma, N, x1);
    }
  }
  const double l = 0.5 * (a + b);
  const double v = gn_value(gamma, N, l);
  return (v >= best_v) ? std::make_pair(l, v) : std::make_pair(best_l, best_v);
}

}  // namespace mwt
