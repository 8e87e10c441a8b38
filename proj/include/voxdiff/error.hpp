#pragma once

#include <stdexcept>
#include <string>

namespace voxdiff {

// Failure categories. The CLI maps each one onto a distinct exit code.
enum class ErrorKind {
  invalid_argument,
  io,
  config,
  solver,
  numeric,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct InvalidArgument : Error {
  explicit InvalidArgument(const std::string& what)
      : Error(ErrorKind::invalid_argument, what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what)
      : Error(ErrorKind::config, what) {}
};

struct SolverError : Error {
  SolverError(const std::string& what, double residual)
      : Error(ErrorKind::solver, what), residual_(residual) {}

  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

struct NumericError : Error {
  explicit NumericError(const std::string& what)
      : Error(ErrorKind::numeric, what) {}
};

namespace detail {

inline void require(bool cond, const std::string& what) {
  if (!cond) throw InvalidArgument(what);
}

}  // namespace detail

}  // namespace voxdiff
