#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "mwtomo/boundary.hpp"
#include "mwtomo/grid.hpp"
#include "mwtomo/iteration_log.hpp"
#include "mwtomo/spectral.hpp"

namespace mwt {

/// @brief A written image plus the data range its gray scale spans (PGM has no
/// metadata, so the scale bar lives in the manifest).
struct ImageRecord {
  std::string file;
  double lo = 0.0;
  double hi = 0.0;
};

/// @brief Write a field as an 8-bit binary PGM, top image row = largest y.
/// The full data range maps linearly onto [0, 255]; a constant field writes
/// mid-gray. Throws IoError when the file cannot be written.
ImageRecord write_pgm(const std::filesystem::path& path, const FieldXd& image);

/// @brief One CSV row per logged iteration: step, residual, rel_error,
/// rel_error_hd, seconds. The trailing status line is a comment.
void write_iteration_csv(const std::filesystem::path& path, const IterationLog& log, RunStatus status);

/// @brief Sweep table: one row per (gamma, logged step) with the decimal log
/// of the relative error; diverged or truthless rows carry inf/nan sentinels.
struct SweepRow {
  double gamma = 0.0;
  int step = 0;
  double log10_rel_error = 0.0;
};
void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows);

/// @brief Boundary trace as CSV: one row per time step, one column per
/// perimeter slot, with a header naming each slot side:index.
void write_trace_csv(const std::filesystem::path& path, const BoundaryTrace<double>& m,
                     const GridSpec& g, const PerimeterMap& p);

/// @brief Eigenvalue table: index, lambda, lambda_im.
void write_eigenvalue_csv(const std::filesystem::path& path, const SpectralReportXd& rep);

/// @brief Power spectrum table: index, lambda, power.
void write_power_csv(const std::filesystem::path& path, const SpectralReportXd& rep,
                     const Eigen::ArrayXd& power);

/// @brief g_N maxima table: N, lambda_at_max, max_value; optional sampled
/// curves (N, lambda, value) when samples > 0.
void write_gn_csv(const std::filesystem::path& path, double gamma, const std::vector<int>& steps_list,
                  const std::filesystem::path* curve_path = nullptr, int curve_samples = 0);

/// @brief Serialize JSON to disk with a trailing newline. Throws IoError.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

/// @brief Parse a JSON document from disk. Unreadable file throws IoError;
/// malformed JSON throws ValidationError.
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace mwt
