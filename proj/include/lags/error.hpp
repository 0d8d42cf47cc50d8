// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace lags {

/// Base class for every error raised by the library. `exit_code()` maps the
/// error onto the command-line tool's exit status.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 3; }
};

/// Invalid or inconsistent configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

/// Arguments outside an operation's domain (shape mismatch, negative power, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A zero channel vector where a receiver needs a direction.
class DegenerateChannelError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// Numerical breakdown: ill-conditioned solve, non-finite loss.
class NumericalError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

/// Problem too large for an exhaustive solver.
class SizeError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// Missing, unreadable or unwritable file. The message names the path.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed input data (bad JSON, wrong schema, inconsistent image pairs).
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace lags
