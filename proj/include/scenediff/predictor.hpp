#pragma once

#include "scenediff/geometry.hpp"

#include <functional>
#include <variant>

namespace scenediff {

/// The classifier-free "no condition" input.
struct NullToken {};

using Condition = std::variant<NullToken, std::reference_wrapper<const PointCloud>>;

inline bool is_null(const Condition& c) { return std::holds_alternative<NullToken>(c); }

/// eps_theta(noisy, condition, t): one 3-vector per noisy point.
///
/// Implementations must be deterministic for fixed inputs and safe to call
/// concurrently.
class NoisePredictor {
 public:
  virtual ~NoisePredictor() = default;
  virtual PointVectors predict(const PointCloud& noisy, const Condition& condition,
                               int t) const = 0;
};

}  // namespace scenediff
