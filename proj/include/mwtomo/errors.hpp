#pragma once

#include <stdexcept>
#include <string>

namespace mwt {

/// Invalid user input, configuration, or operator preconditions (CLI exit code 2).
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// An iteration or solve blew past its divergence guard (CLI exit code 3).
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Filesystem failure while reading or writing artifacts (CLI exit code 4).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace mwt
