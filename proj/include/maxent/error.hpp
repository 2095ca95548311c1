#pragma once

#include <functional>
#include <iostream>
#include <stdexcept>
#include <string>

namespace maxent {

/// Failure category. The CLI maps these onto its exit codes.
enum class ErrorKind {
  usage,      ///< bad flag, bad config value
  input,      ///< unreadable file, shape mismatch, infeasible constraints
  numerical,  ///< NaN/overflow or an internal factorization failure
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ErrorKind::usage, what) {}
};

class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error(ErrorKind::input, what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(ErrorKind::numerical, what) {}
};

// Non-fatal diagnostics (symmetrized input, clipped marginals, calibration range).
// The handler is process-wide; tests swap it to capture messages.
using WarningHandler = std::function<void(const std::string&)>;

inline WarningHandler& warning_handler() {
  static WarningHandler handler = [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; };
  return handler;
}

inline void warn(const std::string& msg) {
  if (warning_handler()) warning_handler()(msg);
}

/// Installs a handler for the lifetime of the guard.
class ScopedWarningHandler {
 public:
  explicit ScopedWarningHandler(WarningHandler h) : saved_(std::move(warning_handler())) {
    warning_handler() = std::move(h);
  }
  ~ScopedWarningHandler() { warning_handler() = std::move(saved_); }
  ScopedWarningHandler(const ScopedWarningHandler&) = delete;
  ScopedWarningHandler& operator=(const ScopedWarningHandler&) = delete;

 private:
  WarningHandler saved_;
};

}  // namespace maxent
