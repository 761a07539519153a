#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "artifacts.hpp"
#include "mwtomo/atr.hpp"
#include "mwtomo/landweber.hpp"
#include "mwtomo/measurement.hpp"
#include "mwtomo/spectral.hpp"

namespace mwt {

inline constexpr const char* tool_version = "0.1.0";

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------
// One JSON document drives every pipeline. Parsing is strict: unknown keys are
// rejected, missing keys fall back to the defaults below, and the whole
// document is validated before any solve starts.

enum class SpeedKind { Constant, Trig, SquareJump };
enum class PhantomKind { SheppLogan, Gaussians };
enum class BoundaryKind { Full, BottomLeftAdjacent };
enum class MethodKind { Landweber, Atr };
enum class AveragingKind { Bump, Ramp };

struct SpeedSpec {
  SpeedKind kind = SpeedKind::Constant;
  double c0 = 1.0;
  SquareJump square;
};

struct PhantomSpec {
  PhantomKind kind = PhantomKind::SheppLogan;
  int supersample = 4;
  std::vector<GaussianBlob> blobs = {{0.0, 0.0, 0.25, 1.0}};
};

struct BoundarySpec {
  BoundaryKind kind = BoundaryKind::Full;
  double adjacent_fraction = 0.2;
};

struct FineForwardSpec {
  double space_factor = 1.0;
  double time_factor = 1.0;
  std::int64_t max_bytes = 2'000'000'000;
};

struct AtrSpec {
  AveragingKind averaging = AveragingKind::Ramp;
  int count = 16;
  double lo_fraction = 0.5;
  double ramp_fraction = 0.3;
  TimeReversalMode reversal = TimeReversalMode::Full;
};

struct SpectrumSpec {
  double margin = 0.03;
  OperatorKind kind = OperatorKind::NormalTranspose;
  int image_count = 6;
  std::int64_t max_bytes = 2'000'000'000;
};

struct ExperimentConfig {
  std::string id = "experiment";
  int nx = 101;
  double T = 4.0;
  double safety = 1.0;
  SpeedSpec speed;
  PhantomSpec phantom;
  BoundarySpec boundary;
  MethodKind method = MethodKind::Landweber;
  std::vector<double> gammas = {0.055};
  int steps = 50;
  int log_every = 1;
  double chi_margin = 0.03;
  TimeWeight time_weight = TimeWeight::SharpCutoff;
  double noise_sigma = 0.0;
  std::optional<FilterSpec> filter;
  FineForwardSpec fine;
  AtrSpec atr;
  SpectrumSpec spectrum;
  std::string out_dir = "out";
  std::uint64_t seed = 1;
  int threads = 1;
};

nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

/// @brief Check every parameter before any solve starts. Throws ValidationError.
void validate_config(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// Wiring
// ---------------------------------------------------------------------------

double speed_max(const SpeedSpec& spec);
FieldXd render_speed(const SpeedSpec& spec, const GridSpec& g);
FieldXd render_phantom(const PhantomSpec& spec, const GridSpec& g);
GammaMask make_gamma(const BoundarySpec& spec, const PerimeterMap& p, const GridSpec& g);
GridSpec config_grid(const ExperimentConfig& cfg);

/// @brief Measurement handles plus the weighted inner products the Landweber
/// engine iterates with. The handles copy their inputs, so they stay valid
/// after the arguments go out of scope and are safe to share across threads.
OperatorPair<FieldXd, TraceXd> wave_operator_pair(const FieldXd& c, const GridSpec& g,
                                                  const PerimeterMap& p, const MeasurementConfig& mc);

/// @brief Measured data for the configured phantom: forward solve on the same
/// grid, or on a finer grid (cfg.fine factors > 1) with the trace resampled
/// back, then the boundary mask, time weight, optional noise, and the optional
/// frequency filter. Filtering happens here, once, so the iteration operators
/// keep their exact adjoint pairing.
BoundaryTrace<double> synthesize_data(const ExperimentConfig& cfg, const GridSpec& g,
                                      const PerimeterMap& p, const GammaMask& gamma,
                                      const FieldXd& f_true);

// ---------------------------------------------------------------------------
// Pipelines
// ---------------------------------------------------------------------------

struct RunSummary {
  std::filesystem::path manifest_path;
  nlohmann::json manifest;
  bool any_diverged = false;
};

/// @brief Full pipeline: phantom, data, one reconstruction per gamma (or one
/// ATR run), per-cell CSV/PGM artifacts, sweep table, manifest.
RunSummary run_experiment(const ExperimentConfig& cfg);

/// @brief Render the phantom and speed images only.
RunSummary run_phantom(const ExperimentConfig& cfg);

/// @brief Synthesize the measured data and write it as CSV.
RunSummary run_forward(const ExperimentConfig& cfg);

/// @brief Assemble the configured operator at desk scale, eigendecompose,
/// write eigenvalue/power tables and eigenvector images.
RunSummary run_spectrum(const ExperimentConfig& cfg);

}  // namespace mwt
