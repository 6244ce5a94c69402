#pragma once

#include <stdexcept>
#include <string>

namespace phnn {

enum class ErrorKind {
  config = 2,
  io = 3,
  nonconvergence = 4,
  singular_operator = 5,
  shape = 6,
  usage = 7,
  unsupported = 8,
  invalid_grid = 9,
  kernel_too_wide = 10,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return "config";
    case ErrorKind::io: return "io";
    case ErrorKind::nonconvergence: return "nonconvergence";
    case ErrorKind::singular_operator: return "singular-operator";
    case ErrorKind::shape: return "shape";
    case ErrorKind::usage: return "usage";
    case ErrorKind::unsupported: return "unsupported";
    case ErrorKind::invalid_grid: return "invalid-grid";
    case ErrorKind::kernel_too_wide: return "kernel-too-wide";
  }
  return "unknown";
}

// Every failure in the library is an Error; kind() doubles as the CLI exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

class NonConvergenceError : public Error {
 public:
  NonConvergenceError(const std::string& what, double residual)
      : Error(ErrorKind::nonconvergence, what), residual_(residual) {}

  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace phnn
