#pragma once

#include <stdexcept>
#include <string>

namespace statfuse {

/// Bad flags, missing columns, dimension mismatches: the caller asked for
/// something the inputs cannot support.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Bad values inside an otherwise well-formed input file (non-finite weight,
/// duplicate id, unparsable number). Messages name the offending row.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical failure: calibration did not converge, transport infeasible,
/// singular system without a usable fallback.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace statfuse
