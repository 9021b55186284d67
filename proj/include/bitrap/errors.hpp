#pragma once

#include <stdexcept>
#include <string>

namespace bitrap {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration values or unknown keys.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Input data that violates a structural contract (ordering, signs, gaps).
class DataError : public Error {
 public:
  using Error::Error;
};

// Malformed input text; carries the 1-based line number.
class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::size_t line)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Non-finite values, failed factorizations, diverging recurrences.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Array dimensions that do not fit together.
class ShapeError : public Error {
 public:
  using Error::Error;
};

}  // namespace bitrap
