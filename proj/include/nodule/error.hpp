#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nodule {

// Base for everything thrown by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed inputs: bad files, out-of-range values, contract violations
// driven by data. CLI maps these to exit code 2.
class DataError : public Error {
 public:
  explicit DataError(const std::string& msg) : Error(msg) {}
};

// Numerical failures: factorization breakdown, solver non-convergence where
// no usable result exists. CLI maps these to exit code 3.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

// Volume file problems carry a distinct kind plus the byte offset (or the
// field name embedded in the message) where the problem was detected.
class VolumeIoError : public DataError {
 public:
  enum class Kind { MissingFile, BadMagic, BadHeader, Truncated, NonFiniteVoxel, WriteFailed };

  VolumeIoError(Kind kind, std::size_t byte_offset, const std::string& msg)
      : DataError(msg), kind_(kind), byte_offset_(byte_offset) {}

  Kind kind() const { return kind_; }
  std::size_t byte_offset() const { return byte_offset_; }

 private:
  Kind kind_;
  std::size_t byte_offset_;
};

}  // namespace nodule
