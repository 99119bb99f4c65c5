#pragma once

#include <stdexcept>
#include <string>

namespace edgeseg {

// Error categories surface as distinct CLI exit codes.

/// Bad configuration: unknown keys, invalid hyper-parameters, bad arguments.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// File-system or format problem; the message always carries the path.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values or numeric failure during computation.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents that do not fit an operation.
class ShapeError : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace edgeseg
