#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <unordered_set>
#include <vector>

namespace scenediff {

using Point3 = Eigen::Vector3d;

/// One 3-vector per point, stored column-wise (noise samples, predictions,
/// offsets).
using PointVectors = Eigen::Matrix3Xd;

struct PointCloud {
  std::vector<Point3> points;
  std::optional<std::vector<std::uint32_t>> labels;

  PointCloud() = default;
  explicit PointCloud(std::vector<Point3> pts) : points(std::move(pts)) {}

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }

  /// Zero-copy 3xN view over the coordinates.
  Eigen::Map<const Eigen::Matrix3Xd> matrix() const;

  /// Throws SizeError for misaligned labels and InvalidArgument for
  /// non-finite coordinates.
  void validate() const;

  static PointCloud from_matrix(const Eigen::Ref<const Eigen::Matrix3Xd>& m);
};

struct RigidPose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static RigidPose identity() { return {}; }

  /// Throws InvalidPoseError unless R is orthonormal with det +1 (1e-6) and t
  /// is finite.
  void validate() const;
  RigidPose inverse() const;
  Point3 apply(const Point3& p) const { return rotation * p + translation; }
};

struct VoxelKey {
  std::int64_t x = 0;
  std::int64_t y = 0;
  std::int64_t z = 0;

  friend bool operator==(const VoxelKey&, const VoxelKey&) = default;
  friend auto operator<=>(const VoxelKey&, const VoxelKey&) = default;
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const noexcept {
    // large primes from the usual spatial-hash recipe
    const auto h = static_cast<std::uint64_t>(k.x) * 73856093ULL ^
                   static_cast<std::uint64_t>(k.y) * 19349663ULL ^
                   static_cast<std::uint64_t>(k.z) * 83492791ULL;
    return static_cast<std::size_t>(h);
  }
};

struct VoxelGrid {
  double resolution = 0.0;
  std::unordered_set<VoxelKey, VoxelKeyHash> occupied;

  std::size_t size() const noexcept { return occupied.size(); }
  std::vector<VoxelKey> sorted_keys() const;
  Point3 center(const VoxelKey& key) const;
};

struct Neighbor {
  std::size_t index = 0;
  double distance = 0.0;
};

VoxelKey voxel_key(const Point3& p, double resolution);

PointCloud transform(const PointCloud& cloud, const RigidPose& pose);

/// Keeps points whose 3D Euclidean norm is <= r_max (inclusive).
PointCloud crop_range(const PointCloud& cloud, double r_max);

/// Greedy farthest point sampling. Starts at index `seed % N`; ties go to the
/// lowest index. Returns the selected indices in selection order.
std::vector<std::size_t> fps_indices(const PointCloud& cloud, std::size_t k,
                                     std::uint64_t seed);
PointCloud fps(const PointCloud& cloud, std::size_t k, std::uint64_t seed);

/// key = floor(coordinate / resolution) per axis.
VoxelGrid voxelize(const PointCloud& cloud, double resolution);

/// Exact Euclidean nearest neighbour of every query; ties go to the lowest
/// reference index.
std::vector<Neighbor> nearest_neighbor(const PointCloud& queries,
                                       const PointCloud& reference);

/// Block concatenation: copy 0, then copy 1, ...
PointCloud replicate(const PointCloud& cloud, std::size_t copies);

std::vector<std::size_t> sample_indices_without_replacement(std::size_t n,
                                                            std::size_t m,
                                                            std::uint64_t seed);
PointCloud sample_without_replacement(const PointCloud& cloud, std::size_t m,
                                      std::uint64_t seed);

/// Subset in the given index order; labels follow.
PointCloud select(const PointCloud& cloud, const std::vector<std::size_t>& indices);

/// Concatenates clouds. Labels survive only if every part has them.
PointCloud concatenate(const std::vector<PointCloud>& parts);

}  // namespace scenediff
