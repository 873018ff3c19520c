#pragma once

#include <stdexcept>
#include <string>

namespace landcover {

// Exception hierarchy. Every error thrown by the library derives from Error so
// the CLI can map it onto a process exit code.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad argument shape or value supplied by the caller.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Input outside the mathematical domain of an operation (zero proportions,
// non-positive concentration, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Numerical breakdown: failed factorization, non-finite density.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data.
class DataError : public Error {
 public:
  using Error::Error;
};

// Invalid run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Too few posterior samples for a summary.
class InsufficientSamples : public Error {
 public:
  using Error::Error;
};

}  // namespace landcover
