#pragma once

#include "scenediff/geometry.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace scenediff {

/// Static k-d tree over a borrowed point array. Results are exact and break
/// distance ties toward the lowest point index, so they match a brute-force
/// scan bit for bit.
class KdTree {
 public:
  explicit KdTree(std::span<const Point3> points, std::size_t leaf_size = 12);

  std::size_t size() const noexcept { return points_.size(); }

  /// Requires a non-empty tree.
  Neighbor nearest(const Point3& query) const;

  /// Same as nearest() but `distance` holds the squared distance.
  Neighbor nearest_squared(const Point3& query) const;

  /// Up to k neighbours sorted by (distance, index).
  std::vector<Neighbor> k_nearest(const Point3& query, std::size_t k) const;

 private:
  struct Node {
    std::size_t begin = 0;
    std::size_t end = 0;
    int axis = -1;  // -1 marks a leaf
    double split = 0.0;
    std::size_t left = 0;
    std::size_t right = 0;
  };

  std::size_t build(std::size_t begin, std::size_t end);
  void search_nearest(std::size_t node, const Point3& q, double& best_d2,
                      std::size_t& best_index) const;
  void search_knn(std::size_t node, const Point3& q, std::size_t k,
                  std::vector<std::pair<double, std::size_t>>& heap) const;

  std::span<const Point3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
  std::size_t leaf_size_;
};

/// Squared distance with a fixed evaluation order, shared by the tree and the
/// brute-force paths.
inline double squared_distance(const Point3& a, const Point3& b) {
  const double dx = a.x() - b.x();
  const double dy = a.y() - b.y();
  const double dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace scenediff
