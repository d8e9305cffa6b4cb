// Copyright 2026 The vt4s Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace vt4s {

/// Base for every error raised by the library. The CLI maps subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input values or shapes (exit code 2).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Unknown or inconsistent configuration (exit code 2).
class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Malformed artifact on disk (exit code 2).
class ParseError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// A pipeline stage ran before the artifact it depends on exists (exit code 3).
class PrerequisiteError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values during optimization (exit code 4).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failures (exit code 4).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace vt4s
