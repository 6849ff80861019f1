// Copyright 2026 The treekv-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace treekv {

/// Process exit codes used by the command-line harness.
enum class ExitCode : int {
  kOk = 0,
  kConfig = 2,
  kInput = 3,
  kInternal = 4,
};

/// Base of every error the library throws. Each subclass carries the exit
/// code the CLI should report for it.
class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what)
      : Error(ExitCode::kConfig, "config error: " + what) {}
};

class InputError : public Error {
 public:
  explicit InputError(const std::string& what)
      : Error(ExitCode::kInput, "input error: " + what) {}
 protected:
  InputError(const std::string& kind, const std::string& what)
      : Error(ExitCode::kInput, kind + ": " + what) {}
};

// Vector or matrix shapes that do not line up.
class DimensionError : public InputError {
 public:
  explicit DimensionError(const std::string& what)
      : InputError("dimension error", what) {}
};

// Operation invoked in a state that does not satisfy its precondition.
class StateError : public Error {
 public:
  explicit StateError(const std::string& what)
      : Error(ExitCode::kInternal, "state error: " + what) {}
};

class OrderingError : public Error {
 public:
  explicit OrderingError(const std::string& what)
      : Error(ExitCode::kInternal, "ordering error: " + what) {}
};

// Wavelet decomposition depth too large for the signal.
class LevelError : public Error {
 public:
  explicit LevelError(const std::string& what)
      : Error(ExitCode::kConfig, "level error: " + what) {}
};

class SelectorError : public Error {
 public:
  explicit SelectorError(const std::string& what)
      : Error(ExitCode::kConfig, "selector error: " + what) {}
};

class InvariantError : public Error {
 public:
  explicit InvariantError(const std::string& what)
      : Error(ExitCode::kInternal, "internal invariant violated: " + what) {}
};

}  // namespace treekv
