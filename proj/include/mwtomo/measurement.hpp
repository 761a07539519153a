#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <optional>
#include <random>

#include <unsupported/Eigen/FFT>

#include "mwtomo/boundary.hpp"
#include "mwtomo/fields.hpp"
#include "mwtomo/grid.hpp"
#include "mwtomo/wave.hpp"

namespace mwt {

// ---------------------------------------------------------------------------
// Time weights
// ---------------------------------------------------------------------------
// The adjoint problem is driven backwards from zero Cauchy data at t_final,
// which is incompatible with boundary data that is still nonzero there. Both
// weights suppress the data near the final time: SharpCutoff zeroes the last
// two levels, CosineTaper rolls off smoothly over the final 10% of the
// interval (gentler on ringing at the jump).

enum class TimeWeight { Ones = 0, SharpCutoff = 1, CosineTaper = 2 };

inline const char* time_weight_name(TimeWeight w) {
  switch (w) {
    case TimeWeight::Ones: return "ones";
    case TimeWeight::SharpCutoff: return "sharp-cutoff";
    case TimeWeight::CosineTaper: return "cosine-taper";
  }
  return "?";
}

inline Eigen::ArrayXd time_weights(const GridSpec& g, TimeWeight kind) {
  Eigen::ArrayXd w = Eigen::ArrayXd::Ones(g.nt + 1);
  switch (kind) {
    case TimeWeight::Ones:
      break;
    case TimeWeight::SharpCutoff:
      w.tail(std::min(2, g.nt + 1)).setZero();
      break;
    case TimeWeight::CosineTaper:
      for (int n = 0; n <= g.nt; ++n) {
        const double s = static_cast<double>(n) / static_cast<double>(g.nt);
        if (s > 0.9) w(n) = 0.5 * (1.0 + std::cos(M_PI * (s - 0.9) / 0.1));
      }
      break;
  }
  return w;
}

// ---------------------------------------------------------------------------
// Boundary-data frequency filter
// ---------------------------------------------------------------------------

/// @brief Per-side 2D Fourier multiplier: keep |w_t| <= cutoff_fraction of the
/// time Nyquist rate, and (when cone_speed > 0) keep only the propagating cone
/// |w_t| >= cone_speed |w_s|. The pass region is kept at exactly 1; outside it
/// the mask rolls off to 0 with a raised cosine over a `taper` fraction of the
/// local cutoff radius (taper = 0 gives a sharp 0/1 projection).
struct FilterSpec {
  double cutoff_fraction = 0.5;
  double cone_speed = 0.0;
  double taper = 0.1;
};

namespace detail {

inline void check_filter(const FilterSpec& spec) {
  if (!(spec.cutoff_fraction > 0.0) || spec.cutoff_fraction > 1.0)
    throw ValidationError("apply_filter: cutoff_fraction must lie in (0, 1]");
  if (!(spec.cone_speed >= 0.0)) throw ValidationError("apply_filter: cone_speed must be >= 0");
  if (!(spec.taper >= 0.0) || spec.taper >= 1.0)
    throw ValidationError("apply_filter: taper must lie in [0, 1)");
}

/// @brief |omega| for DFT bin `idx` of `n` samples spaced `d` apart.
inline double bin_freq(int idx, int n, double d) {
  const int k = (idx <= n / 2) ? idx : idx - n;
  return 2.0 * M_PI * std::abs(k) / (n * d);
}

inline double lowpass_profile(double w, double wc, double taper) {
  if (w <= wc) return 1.0;
  const double band = taper * wc;
  if (band <= 0.0 || w >= wc + band) return 0.0;
  return 0.5 * (1.0 + std::cos(M_PI * (w - wc) / band));
}

inline double cone_profile(double wt, double ws, double cone_speed, double taper) {
  if (cone_speed <= 0.0) return 1.0;
  const double r = cone_speed * ws;
  if (wt >= r) return 1.0;
  const double band = taper * r;
  if (band <= 0.0 || wt <= r - band) return 0.0;
  return 0.5 * (1.0 + std::cos(M_PI * (r - wt) / band));
}

inline Eigen::ArrayXXd filter_mask(int n_t, int n_s, double dt, double ds, const FilterSpec& spec) {
  const double wc = spec.cutoff_fraction * M_PI / dt;
  Eigen::ArrayXXd mask(n_t, n_s);
  for (int q = 0; q < n_s; ++q) {
    const double ws = bin_freq(q, n_s, ds);
    for (int p = 0; p < n_t; ++p) {
      const double wt = bin_freq(p, n_t, dt);
      mask(p, q) = lowpass_profile(wt, wc, spec.taper) * cone_profile(wt, ws, spec.cone_speed, spec.taper);
    }
  }
  return mask;
}

}  // namespace detail

/// @brief Filter the trace side by side: 2D DFT over (time, side arclength),
/// multiply by the nonnegative mask of FilterSpec, transform back, keep the
/// real part. The mask depends only on |frequency|, so a real input stays
/// real up to roundoff; mask values never exceed 1, so the trace norm never
/// grows.
template <typename Scalar>
Trace<Scalar> apply_filter(const Trace<Scalar>& values, const FilterSpec& spec, const GridSpec& g,
                           const PerimeterMap& p) {
  detail::check_filter(spec);
  if (values.rows() != g.nt + 1 || values.cols() != p.n())
    throw ValidationError("apply_filter: trace shape does not match the grid");
  using Cplx = std::complex<double>;
  Eigen::FFT<double> fft;
  Trace<Scalar> out(values.rows(), values.cols());
  const int n_t = g.nt + 1;
  for (Side s : {Side::Bottom, Side::Right, Side::Top, Side::Left}) {
    const int n_s = p.side_size(s);
    const Eigen::ArrayXXd mask = detail::filter_mask(n_t, n_s, g.dt, g.dx, spec);
    Eigen::MatrixXcd block(n_t, n_s);
    block.real() = side_block(values, p, s).matrix().template cast<double>();
    block.imag().setZero();
    Eigen::VectorXcd line, hat;
    for (int q = 0; q < n_s; ++q) {
      line = block.col(q);
      fft.fwd(hat, line);
      block.col(q) = hat;
    }
    for (int r = 0; r < n_t; ++r) {
      line = block.row(r).transpose();
      fft.fwd(hat, line);
      block.row(r) = hat.transpose();
    }
    block.array() *= mask.cast<Cplx>();
    for (int r = 0; r < n_t; ++r) {
      line = block.row(r).transpose();
      fft.inv(hat, line);
      block.row(r) = hat.transpose();
    }
    for (int q = 0; q < n_s; ++q) {
      line = block.col(q);
      fft.inv(hat, line);
      block.col(q) = hat;
    }
    const Trace<Scalar> filtered = block.real().array().template cast<Scalar>();
    set_side_block(out, p, s, filtered);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Measurement operator
// ---------------------------------------------------------------------------

/// @brief Everything that turns the raw wave solver into the measurement map:
/// the observed boundary part, the interior support cutoff chi, the per-level
/// time weight, and an optional data-space frequency filter used on the
/// adjoint side.
struct MeasurementConfig {
  GammaMask gamma;
  FieldXd interior_chi;
  Eigen::ArrayXd time_weight;
  std::optional<FilterSpec> data_filter;
};

/// @brief Standard configuration: cutoff margin as a fraction of the domain
/// width, one shared time-weight rule, optional filter.
inline MeasurementConfig measurement_config(const GridSpec& g, const PerimeterMap& p, GammaMask gamma,
                                            double margin_fraction = 0.03,
                                            TimeWeight weight = TimeWeight::SharpCutoff,
                                            std::optional<FilterSpec> filter = std::nullopt) {
  if (static_cast<int>(gamma.on.size()) != p.n())
    throw ValidationError("measurement_config: gamma mask does not match the perimeter");
  MeasurementConfig cfg;
  cfg.gamma = std::move(gamma);
  cfg.interior_chi = interior_cutoff<double>(g, margin_fraction);
  cfg.time_weight = time_weights(g, weight);
  cfg.data_filter = filter;
  return cfg;
}

namespace detail {

inline void check_measurement(const MeasurementConfig& cfg, const GridSpec& g, const PerimeterMap& p,
                              const char* who) {
  if (static_cast<int>(cfg.gamma.on.size()) != p.n())
    throw ValidationError(std::string(who) + ": gamma mask does not match the perimeter");
  if (cfg.interior_chi.rows() != g.ny || cfg.interior_chi.cols() != g.nx)
    throw ValidationError(std::string(who) + ": interior_chi shape does not match the grid");
  if (cfg.interior_chi.minCoeff() < -1e-12 || cfg.interior_chi.maxCoeff() > 1.0 + 1e-12)
    throw ValidationError(std::string(who) + ": interior_chi must take values in [0, 1]");
  if (static_cast<int>(cfg.time_weight.size()) != g.nt + 1)
    throw ValidationError(std::string(who) + ": time_weight length does not match the grid");
  if (cfg.time_weight.minCoeff() < 0.0 || cfg.time_weight.maxCoeff() > 1.0 + 1e-12)
    throw ValidationError(std::string(who) + ": time_weight must take values in [0, 1]");
  if (cfg.data_filter) check_filter(*cfg.data_filter);
}

}  // namespace detail

/// @brief Measurement map: solve the wave problem from initial pressure f,
/// record the boundary trace, zero the unobserved columns, and apply the time
/// weight row by row.
template <typename Scalar>
BoundaryTrace<Scalar> apply_L(const Field<Scalar>& f, const Field<Scalar>& c, const GridSpec& g,
                              const PerimeterMap& p, const MeasurementConfig& cfg) {
  detail::check_measurement(cfg, g, p, "apply_L");
  ForwardOptions opt;
  opt.record_trace = true;
  ForwardResult<Scalar> fwd = forward_solve(f, c, g, p, opt);
  BoundaryTrace<Scalar> out;
  out.gamma = cfg.gamma;
  out.values = std::move(fwd.trace);
  zero_outside(out.values, cfg.gamma);
  out.values.colwise() *= cfg.time_weight.cast<Scalar>();
  return out;
}

/// @brief Adjoint of apply_L with respect to the c^-2-weighted field pairing
/// and the dt*dx trace pairing: mask the data by gamma and the time weight,
/// optionally filter it, drive the reversed wave problem with it as Neumann
/// data, and take the backward difference quotient at t = 0, cut off to the
/// interior support. In the continuum trace measure the reversal output needs
/// no further scale.
template <typename Scalar>
Field<Scalar> apply_Lstar(const Trace<Scalar>& data, const Field<Scalar>& c, const GridSpec& g,
                          const PerimeterMap& p, const MeasurementConfig& cfg) {
  detail::check_measurement(cfg, g, p, "apply_Lstar");
  if (data.rows() != g.nt + 1 || data.cols() != p.n())
    throw ValidationError("apply_Lstar: trace shape does not match the grid");
  Trace<Scalar> masked = data;
  zero_outside(masked, cfg.gamma);
  masked.colwise() *= cfg.time_weight.cast<Scalar>();
  if (cfg.data_filter) masked = apply_filter(masked, *cfg.data_filter, g, p);
  Field<Scalar> v0 = adjoint_solve(masked, c, g, p);
  v0 *= cfg.interior_chi.cast<Scalar>();
  return v0;
}

/// @brief The time-reversal normal operator apply_Lstar(apply_L(chi f)).
/// Approximately symmetric positive semidefinite in the c^-2-weighted
/// pairing; the approximation fails at grid frequencies, so iteration
/// engines use apply_normal_exact instead.
template <typename Scalar>
Field<Scalar> apply_normal(const Field<Scalar>& f, const Field<Scalar>& c, const GridSpec& g,
                           const PerimeterMap& p, const MeasurementConfig& cfg) {
  const Field<Scalar> cut = f * cfg.interior_chi.cast<Scalar>();
  const BoundaryTrace<Scalar> m = apply_L(cut, c, g, p, cfg);
  return apply_Lstar(m.values, c, g, p, cfg);
}

/// @brief Exact discrete adjoint of apply_L in the same pairings, built on
/// the transposed leapfrog recursion instead of the continuum reversal: mask
/// and weight the data, optionally filter it, apply the plain transpose of
/// the trace map, and rescale by the quadrature ratio c^2 dt dx / w_node. The
/// adjoint identity holds to roundoff for arbitrary (rough) inputs, which
/// makes apply_normal_exact a true Gram operator: PSD, so Landweber steps
/// with gamma < 2 / lambda_max cannot blow up on dispersion artifacts.
template <typename Scalar>
Field<Scalar> apply_Lstar_exact(const Trace<Scalar>& data, const Field<Scalar>& c, const GridSpec& g,
                                const PerimeterMap& p, const MeasurementConfig& cfg) {
  detail::check_measurement(cfg, g, p, "apply_Lstar_exact");
  if (data.rows() != g.nt + 1 || data.cols() != p.n())
    throw ValidationError("apply_Lstar_exact: trace shape does not match the grid");
  Trace<Scalar> masked = data;
  zero_outside(masked, cfg.gamma);
  masked.colwise() *= cfg.time_weight.cast<Scalar>();
  if (cfg.data_filter) masked = apply_filter(masked, *cfg.data_filter, g, p);
  Field<Scalar> out = transpose_solve(masked, c, g, p);
  out *= (c * c) * Scalar(g.dt * g.dx) / node_weights<Scalar>(g);
  out *= cfg.interior_chi.cast<Scalar>();
  return out;
}

/// @brief apply_Lstar_exact(apply_L(chi f)): symmetric PSD in the
/// c^-2-weighted pairing to roundoff.
template <typename Scalar>
Field<Scalar> apply_normal_exact(const Field<Scalar>& f, const Field<Scalar>& c, const GridSpec& g,
                                 const PerimeterMap& p, const MeasurementConfig& cfg) {
  const Field<Scalar> cut = f * cfg.interior_chi.cast<Scalar>();
  const BoundaryTrace<Scalar> m = apply_L(cut, c, g, p, cfg);
  return apply_Lstar_exact(m.values, c, g, p, cfg);
}

// ---------------------------------------------------------------------------
// Data perturbations
// ---------------------------------------------------------------------------

namespace detail {

/// @brief Standard normal sampler: Box-Muller on top of mt19937_64 with an
/// explicit bits-to-(0,1) map, so noisy datasets reproduce bit for bit from
/// the seed on any platform (std::normal_distribution output is
/// implementation-defined).
class GaussianSampler {
 public:
  explicit GaussianSampler(std::uint64_t seed) : rng_(seed) {}

  double operator()() {
    const double u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

 private:
  double uniform01() {
    return (static_cast<double>(rng_() >> 11) + 0.5) * 0x1p-53;
  }
  std::mt19937_64 rng_;
};

}  // namespace detail

/// @brief Add i.i.d. Gaussian noise of the given standard deviation to every
/// observed entry (columns inside gamma, all time levels), walking the trace
/// column by column so the result is a pure function of the seed.
template <typename Scalar>
BoundaryTrace<Scalar> add_noise(const BoundaryTrace<Scalar>& m, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw ValidationError("add_noise: sigma must be >= 0");
  BoundaryTrace<Scalar> out = m;
  if (sigma == 0.0) return out;
  detail::GaussianSampler gauss(seed);
  for (int k = 0; k < static_cast<int>(m.gamma.on.size()); ++k) {
    if (!m.gamma.on(k)) continue;
    for (int n = 0; n < static_cast<int>(out.values.rows()); ++n)
      out.values(n, k) += static_cast<Scalar>(sigma * gauss());
  }
  return out;
}

/// @brief Corrupt the data by adding one side's trace onto another
/// (arclength index matched), which produces data outside the range of the
/// measurement map. Both sides must be fully observed.
template <typename Scalar>
BoundaryTrace<Scalar> add_side_swap_perturbation(const BoundaryTrace<Scalar>& m, Side src, Side dst,
                                                 const PerimeterMap& p) {
  if (src == dst) throw ValidationError("add_side_swap_perturbation: sides must be distinct");
  if (p.side_size(src) != p.side_size(dst))
    throw ValidationError("add_side_swap_perturbation: side lengths differ");
  for (Side s : {src, dst}) {
    for (int k = p.side_begin(s); k < p.side_begin(s) + p.side_size(s); ++k)
      if (!m.gamma.on(k))
        throw ValidationError(std::string("add_side_swap_perturbation: ") + side_name(s) +
                              " side is not fully observed");
  }
  BoundaryTrace<Scalar> out = m;
  out.values.middleCols(p.side_begin(dst), p.side_size(dst)) +=
      m.values.middleCols(p.side_begin(src), p.side_size(src));
  return out;
}

}  // namespace mwt
