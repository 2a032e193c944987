#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace xtal {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller violated an operation's precondition (bad tolerance, mismatched
/// list lengths, non-unimodular matrix, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unsupported input data. Carries the 1-based line number when
/// the failure is attributable to one.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A file could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// An iterative algorithm failed to converge.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace xtal
