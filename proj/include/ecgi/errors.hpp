#pragma once

#include <stdexcept>
#include <string>

namespace ecgi {

// Shape conformance violation; message names the offending shapes.
struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A NaN or Inf appeared where the contract requires finite values.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// API misuse: non-scalar loss, out-of-range timestep, invalid rank, ...
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad magic, version, or length while reading a binary container.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid experiment or dataset configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// The regularized normal matrix could not be factorized.
struct RegularizationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Reverse-diffusion chain produced a non-finite state.
struct SamplingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Metric has no defined value (e.g. every electrode degenerate).
struct UndefinedMetricError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace ecgi
