#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace capfuse {

// Base class for everything this library throws.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Operand shapes incompatible with an operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration (bad key, bad value, missing required field).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Invalid or missing input data (files, ids, references).
class DataError : public Error {
 public:
  using Error::Error;
};

// Malformed binary or text container; carries the byte offset of the problem.
class FormatError : public DataError {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : DataError(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_ = 0;
};

// Non-finite values or other numerical failures.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace capfuse
