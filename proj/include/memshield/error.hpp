#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace memshield {

// Base of every error raised by the library. Callers that only need a message
// catch this; the CLI maps subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Header is missing required columns or carries unknown ones.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// A cell or category string could not be parsed. Row index is 1-based over
// data rows (the header is row 0), or npos when not tied to a file row.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t row = npos)
      : Error(row == npos ? what : "row " + std::to_string(row) + ": " + what), row_(row) {}

  std::size_t row() const noexcept { return row_; }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  std::size_t row_;
};

// Data parsed fine but violates a dataset-level expectation (e.g. class counts).
class ValidationError : public Error {
 public:
  using Error::Error;
};

class StratificationError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class DecodeError : public Error {
 public:
  using Error::Error;
};

// Caller passed arguments outside an operation's precondition.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace memshield
