#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sfd {

// Base class for all errors raised by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid argument value (out-of-range parameter, empty input, NaN, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Dimension mismatch between operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Numerical failure (factorization breakdown, non-finite loss/gradient).
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& msg, std::ptrdiff_t pivot = -1)
      : Error(msg), pivot_index(pivot) {}
  // Index of the failing pivot for factorization failures, -1 otherwise.
  std::ptrdiff_t pivot_index;
};

// Malformed file contents (bad magic, inconsistent counts).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Underlying I/O failure (missing file, truncated read, unwritable dir).
class IoError : public Error {
 public:
  using Error::Error;
};

// A partition left some client without usable data.
class PartitionError : public Error {
 public:
  using Error::Error;
};

// An object was used before it reached the required state.
class StateError : public Error {
 public:
  using Error::Error;
};

// Inconsistent messages within one communication round.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// Invalid or contradictory experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace sfd
