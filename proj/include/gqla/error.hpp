#pragma once

#include <stdexcept>
#include <string>

namespace gqla {

class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Dimension mismatch, non-square or asymmetric input, malformed tensor shapes.
class ShapeError : public Error {
  public:
    using Error::Error;
};

// Argument outside the operation's domain (rank too large, empty sequence, ...).
class ParameterError : public Error {
  public:
    using Error::Error;
};

// Iterative method failed to converge.
class NumericError : public Error {
  public:
    using Error::Error;
};

// An expanded cache entry does not lie in the column space of the up-projections.
class OutOfSubspaceError : public Error {
  public:
    using Error::Error;
};

// Calibration statistics cannot support the requested transform.
class DegenerateCalibrationError : public Error {
  public:
    using Error::Error;
};

// Malformed or truncated checkpoint / table input.
class ParseError : public Error {
  public:
    using Error::Error;
};

class IoError : public Error {
  public:
    using Error::Error;
};

} // namespace gqla
