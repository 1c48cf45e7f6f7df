#pragma once

#include <stdexcept>
#include <string>

namespace optree {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or unusable input data (CSV, labels, dimensions).
class DataError : public Error {
 public:
  using Error::Error;
};

// Contract violation while building a MILP model (bounds, coefficients, refs).
class ModelError : public Error {
 public:
  using Error::Error;
};

// Numerical breakdown inside the LP or branch-and-bound machinery.
class SolverError : public Error {
 public:
  using Error::Error;
};

// Model file could not be read back (schema version, invariants).
class FormatError : public Error {
 public:
  using Error::Error;
};

// No feasible tree was found within the limits.
class NoSolutionError : public Error {
 public:
  using Error::Error;
};

}  // namespace optree
