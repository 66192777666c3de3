#pragma once

#include <stdexcept>
#include <string>

namespace confident {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument does not hold (bad temperature, empty row,
/// length mismatch, wrong score kind, ...).
class DomainError : public Error {
public:
  using Error::Error;
};

/// A prediction dump, score table or priors file could not be parsed.
class IngestionError : public Error {
public:
  IngestionError(const std::string& where, std::size_t line, const std::string& what)
      : Error(where + ":" + std::to_string(line) + ": " + what), line_(line) {}
  explicit IngestionError(const std::string& what) : Error(what), line_(0) {}

  /// 1-based line number of the offending record, 0 when not line-specific.
  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

/// A structural file (hierarchy, policy, priors) is well-formed but violates
/// an invariant.
class ValidationError : public Error {
public:
  using Error::Error;
};

class InsufficientDataError : public Error {
public:
  using Error::Error;
};

/// Prior-shift system is singular beyond its one-dimensional nullspace
/// (posterior with zero entries). Callers may retry with smoothing.
class DegenerateSystemError : public Error {
public:
  using Error::Error;
};

/// Iterative or direct solve failed to reach the residual target.
class NumericalError : public Error {
public:
  using Error::Error;
};

}  // namespace confident
