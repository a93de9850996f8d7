#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace scenediff {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A scalar parameter is outside its documented range.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Two inputs that must agree in length do not, or a requested count exceeds
/// what the input holds.
class SizeError : public Error {
 public:
  using Error::Error;
};

class EmptyInputError : public Error {
 public:
  using Error::Error;
};

class InvalidPoseError : public Error {
 public:
  using Error::Error;
};

/// The ground-truth map does not hold enough points around a scan.
class RegionTooSparseError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents. `position()` is a byte offset for binary formats
/// and a 1-based line number for text formats.
class FormatError : public Error {
 public:
  enum class Unit { Byte, Line };

  FormatError(const std::string& what, std::uint64_t position, Unit unit);

  std::uint64_t position() const noexcept { return position_; }
  Unit unit() const noexcept { return unit_; }

 private:
  std::uint64_t position_;
  Unit unit_;
};

}  // namespace scenediff
