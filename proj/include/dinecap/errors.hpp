// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace dinecap {

/// Inconsistent tensor or sequence shapes.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid configuration values or channel parameters.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// NaN/Inf encountered in a forward or backward pass, or a diverged solver.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A requested combination the library cannot execute (e.g. a channel without
/// a pathwise derivative used for generator training).
class UnsupportedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input files.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dinecap
