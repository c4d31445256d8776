#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cagnet {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that cannot be combined by an operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A row or sequence with no valid positions where at least one is required.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf produced by a forward op, a loss or a gradient.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

/// Misuse of the gradient tape (non-scalar loss, replayed tape).
class TapeError : public Error {
 public:
  using Error::Error;
};

/// Binary or checkpoint file that does not match its declared layout.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Input that violates a documented precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Text input (JSONL, config) that failed to parse; carries the 1-based line.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace cagnet
