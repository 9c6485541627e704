#pragma once

#include <stdexcept>
#include <string>

namespace contrawr {

// Error taxonomy. The CLI maps these onto exit codes:
//   parameter/config errors -> 2, data errors -> 3, numeric errors -> 4.
struct error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid argument values (bad sigma, bad band, out-of-range index, ...).
struct parameter_error : error {
  using error::error;
};

// Malformed or unknown configuration.
struct config_error : parameter_error {
  using parameter_error::parameter_error;
};

// Bad input data: unreadable files, impossible splits, degenerate inputs.
struct data_error : error {
  using error::error;
};

// File-format violations (bad magic, truncation, non-finite payload).
struct format_error : data_error {
  using data_error::data_error;
};

// Subject partition cannot be formed.
struct split_error : data_error {
  using data_error::data_error;
};

// Single-class or otherwise unusable training data.
struct degenerate_data_error : data_error {
  using data_error::data_error;
};

// Tensor shape mismatches; names the offending layer where known.
struct shape_error : error {
  using error::error;
};

// Calling-contract violations (backward on non-scalar, non-unit input, ...).
struct contract_error : error {
  using error::error;
};

// NaN/Inf detected mid-pipeline.
struct numeric_error : error {
  using error::error;
};

}  // namespace contrawr
