#include "scenediff/errors.hpp"

namespace scenediff {

namespace {

std::string positioned(const std::string& what, std::uint64_t position,
                       FormatError::Unit unit) {
  const char* label = unit == FormatError::Unit::Byte ? "byte " : "line ";
  return what + " (at " + label + std::to_string(position) + ")";
}

}  // namespace

FormatError::FormatError(const std::string& what, std::uint64_t position,
                         Unit unit)
    : Error(positioned(what, position, unit)), position_(position), unit_(unit) {}

}  // namespace scenediff
