#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mads {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A precondition of an operation was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// A forward evaluation produced NaN or Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Parameter vectors do not match an architecture.
class ArchitectureError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file; carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Well-formed input whose content breaks a data invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace mads
