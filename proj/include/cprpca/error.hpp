#pragma once

#include <stdexcept>
#include <string>

namespace cprpca {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes or index sets that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Non-finite data, empty collections where data is required, malformed files.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

class InvalidParameter : public Error {
 public:
  using Error::Error;
};

// Not enough observations (or calibration points) to run a procedure.
class InsufficientData : public Error {
 public:
  using Error::Error;
};

class InvalidScale : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int iteration)
      : Error(what), iteration_(iteration) {}
  int iteration() const noexcept { return iteration_; }

 private:
  int iteration_;
};

class UnknownSetting : public Error {
 public:
  using Error::Error;
};

// Parse failure with a 1-based line number (0 when not line-oriented).
class ParseError : public InvalidInput {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& msg)
      : InvalidInput(file + ":" + std::to_string(line) + ": " + msg), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace cprpca
