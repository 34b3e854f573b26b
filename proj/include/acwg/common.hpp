#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace acwg {

/// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input data. `line` is 1-based, 0 when not tied to a line.
class DataError : public Error {
 public:
  DataError(const std::string& what, std::size_t line = 0)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A precondition of an operation was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf appeared where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// An upstream artifact required by a pipeline stage is missing.
class DependencyError : public Error {
 public:
  DependencyError(const std::string& artifact, const std::string& what)
      : Error(what), artifact_(artifact) {}
  const std::string& artifact() const noexcept { return artifact_; }

 private:
  std::string artifact_;
};

/// Execution policy for the data-parallel kernels. `serial` is the
/// reference path kept for testing; both must produce identical results.
enum class Exec { serial, parallel };

/// Caps the OpenMP worker count used by `Exec::parallel` kernels.
void set_jobs(int jobs);
int jobs();

}  // namespace acwg
