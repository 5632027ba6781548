#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace preflearn {

/// Root of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Sequence does not fit the model context or a configured length limit.
class LengthError : public Error {
 public:
  using Error::Error;
};

/// Arrays that must agree in length or layout do not.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values where finite ones are required.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Required score or field missing from otherwise well-formed data.
class DataError : public Error {
 public:
  using Error::Error;
};

class SizeError : public Error {
 public:
  using Error::Error;
};

class InvalidTokenError : public Error {
 public:
  InvalidTokenError(std::size_t position, int token)
      : Error("invalid token " + std::to_string(token) + " at position " +
              std::to_string(position)),
        position_(position),
        token_(token) {}

  std::size_t position() const noexcept { return position_; }
  int token() const noexcept { return token_; }

 private:
  std::size_t position_;
  int token_;
};

/// Error tied to a line of an input file (1-based).
class LineError : public Error {
 public:
  LineError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ParseError : public LineError {
 public:
  using LineError::LineError;
};

class SchemaError : public LineError {
 public:
  using LineError::LineError;
};

}  // namespace preflearn
