#pragma once

#include <stdexcept>
#include <string>

namespace dpm {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand dimensions do not line up. Messages name the operands involved.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Domain violation or a non-finite value where a finite one is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data (files, records, schemas).
class DataError : public Error {
 public:
  using Error::Error;
};

// A caller-supplied argument is out of range or otherwise unusable.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

// A run configuration (file or flags) is invalid.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// An internal invariant was broken; indicates a bug, not bad input.
class InternalError : public Error {
 public:
  using Error::Error;
};

}  // namespace dpm
