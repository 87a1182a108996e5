// SPDX-License-Identifier: Apache-2.0
/**
 * @file   error.hpp
 * @brief  Exception hierarchy shared by every specattn module.
 *
 * Each error carries an ErrorKind so the C API can map it onto a stable
 * status code without string matching.
 */
#pragma once

#include <stdexcept>
#include <string>

namespace specattn {

enum class ErrorKind {
  Dimension,
  Numerical,
  DegenerateInput,
  Constraint,
  Parse,
  Config,
  Io,
  Diverged,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what)
      : Error(ErrorKind::Dimension, what) {}
};

/// Non-convergence or a non-finite intermediate value.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, double residual = 0.0)
      : Error(ErrorKind::Numerical, what), residual_(residual) {}

  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

class DegenerateInputError : public Error {
 public:
  explicit DegenerateInputError(const std::string& what)
      : Error(ErrorKind::DegenerateInput, what) {}
};

class ConstraintError : public Error {
 public:
  explicit ConstraintError(const std::string& what)
      : Error(ErrorKind::Constraint, what) {}
};

/// Malformed input file. `line` is 1-based; 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(ErrorKind::Parse, what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what)
      : Error(ErrorKind::Config, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};

class DivergenceError : public Error {
 public:
  explicit DivergenceError(const std::string& what)
      : Error(ErrorKind::Diverged, what) {}
};

}  // namespace specattn
