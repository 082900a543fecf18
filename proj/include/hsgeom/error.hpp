#pragma once

#include <stdexcept>
#include <string>

namespace hsgeom {

// Exception families map onto CLI exit codes: ValidationError/IoError -> 2,
// NumericalError -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Zero-norm vector or centroid where a direction is required.
class DegenerateInput : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace hsgeom
