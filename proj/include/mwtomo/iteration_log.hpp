#pragma once

#include <string>
#include <vector>

namespace mwt {

/// @brief One row of an iterative reconstruction log. rel_error fields are
/// NaN when no ground truth is available.
struct IterationEntry {
  int step = 0;
  double residual = 0.0;      // data-space norm of L f - m
  double rel_error = 0.0;     // weighted L2 error against ground truth
  double rel_error_hd = 0.0;  // gradient-seminorm error against ground truth
  double seconds = 0.0;       // wall clock since iteration start
};

enum class RunStatus { Completed, DiscrepancyStop, Diverged };

inline const char* run_status_name(RunStatus s) {
  switch (s) {
    case RunStatus::Completed: return "completed";
    case RunStatus::DiscrepancyStop: return "discrepancy_stop";
    case RunStatus::Diverged: return "diverged";
  }
  return "unknown";
}

using IterationLog = std::vector<IterationEntry>;

}  // namespace mwt
