#include "scenediff/geometry.hpp"

#include "scenediff/errors.hpp"
#include "scenediff/parallel.hpp"
#include "scenediff/spatial_index.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

namespace scenediff {

Eigen::Map<const Eigen::Matrix3Xd> PointCloud::matrix() const {
  static_assert(sizeof(Point3) == 3 * sizeof(double), "Point3 must be densely packed");
  const double* data = points.empty() ? nullptr : points.front().data();
  return {data, 3, static_cast<Eigen::Index>(points.size())};
}

void PointCloud::validate() const {
  if (labels && labels->size() != points.size()) {
    throw SizeError("label count " + std::to_string(labels->size()) +
                    " does not match point count " + std::to_string(points.size()));
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!points[i].allFinite()) {
      throw InvalidArgument("non-finite coordinate at point " + std::to_string(i));
    }
  }
}

PointCloud PointCloud::from_matrix(const Eigen::Ref<const Eigen::Matrix3Xd>& m) {
  PointCloud out;
  out.points.resize(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.cols(); ++i) out.points[static_cast<std::size_t>(i)] = m.col(i);
  return out;
}

void RigidPose::validate() const {
  const double orth_err =
      (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  const double det = rotation.determinant();
  if (!rotation.allFinite() || !(orth_err <= 1e-6) || !(std::abs(det - 1.0) <= 1e-6)) {
    throw InvalidPoseError("rotation is not orthonormal with determinant +1");
  }
  if (!translation.allFinite()) throw InvalidPoseError("translation is not finite");
}

RigidPose RigidPose::inverse() const {
  RigidPose inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

std::vector<VoxelKey> VoxelGrid::sorted_keys() const {
  std::vector<VoxelKey> keys(occupied.begin(), occupied.end());
  std::sort(keys.begin(), keys.end());
  return keys;
}

Point3 VoxelGrid::center(const VoxelKey& key) const {
  return {(static_cast<double>(key.x) + 0.5) * resolution,
          (static_cast<double>(key.y) + 0.5) * resolution,
          (static_cast<double>(key.z) + 0.5) * resolution};
}

VoxelKey voxel_key(const Point3& p, double resolution) {
  return {static_cast<std::int64_t>(std::floor(p.x() / resolution)),
          static_cast<std::int64_t>(std::floor(p.y() / resolution)),
          static_cast<std::int64_t>(std::floor(p.z() / resolution))};
}

PointCloud transform(const PointCloud& cloud, const RigidPose& pose) {
  pose.validate();
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points) out.points.push_back(pose.apply(p));
  out.labels = cloud.labels;
  return out;
}

PointCloud crop_range(const PointCloud& cloud, double r_max) {
  if (!(r_max > 0.0)) throw InvalidArgument("crop range must be positive");
  std::vector<std::size_t> keep;
  keep.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (cloud.points[i].norm() <= r_max) keep.push_back(i);
  }
  return select(cloud, keep);
}

std::vector<std::size_t> fps_indices(const PointCloud& cloud, std::size_t k,
                                     std::uint64_t seed) {
  const std::size_t n = cloud.size();
  if (n == 0) throw EmptyInputError("farthest point sampling on an empty cloud");
  if (k > n) {
    throw SizeError("cannot sample " + std::to_string(k) + " points from " +
                    std::to_string(n));
  }
  if (k == 0) throw SizeError("farthest point sampling needs k >= 1");

  std::vector<std::size_t> selected;
  selected.reserve(k);
  std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
  std::size_t current = static_cast<std::size_t>(seed % n);
  for (std::size_t s = 0; s < k; ++s) {
    selected.push_back(current);
    min_d2[current] = -1.0;  // never re-selected
    const Point3& c = cloud.points[current];
    std::size_t best = 0;
    double best_d2 = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (min_d2[i] < 0.0) continue;
      const double d2 = squared_distance(cloud.points[i], c);
      if (d2 < min_d2[i]) min_d2[i] = d2;
      if (min_d2[i] > best_d2) {
        best_d2 = min_d2[i];
        best = i;
      }
    }
    current = best;
  }
  return selected;
}

PointCloud fps(const PointCloud& cloud, std::size_t k, std::uint64_t seed) {
  return select(cloud, fps_indices(cloud, k, seed));
}

VoxelGrid voxelize(const PointCloud& cloud, double resolution) {
  if (!(resolution > 0.0)) throw InvalidArgument("voxel resolution must be positive");
  VoxelGrid grid;
  grid.resolution = resolution;
  grid.occupied.reserve(cloud.size());
  for (const auto& p : cloud.points) grid.occupied.insert(voxel_key(p, resolution));
  return grid;
}

std::vector<Neighbor> nearest_neighbor(const PointCloud& queries, const PointCloud& reference) {
  if (reference.empty()) throw EmptyInputError("nearest neighbour reference cloud is empty");
  const KdTree tree(reference.points);
  std::vector<Neighbor> out(queries.size());
  parallel_for(queries.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) out[i] = tree.nearest(queries.points[i]);
  });
  return out;
}

PointCloud replicate(const PointCloud& cloud, std::size_t copies) {
  if (copies == 0) throw InvalidArgument("replication count must be >= 1");
  PointCloud out;
  out.points.reserve(cloud.size() * copies);
  for (std::size_t c = 0; c < copies; ++c) {
    out.points.insert(out.points.end(), cloud.points.begin(), cloud.points.end());
  }
  if (cloud.labels) {
    std::vector<std::uint32_t> labels;
    labels.reserve(cloud.size() * copies);
    for (std::size_t c = 0; c < copies; ++c) {
      labels.insert(labels.end(), cloud.labels->begin(), cloud.labels->end());
    }
    out.labels = std::move(labels);
  }
  return out;
}

std::vector<std::size_t> sample_indices_without_replacement(std::size_t n, std::size_t m,
                                                            std::uint64_t seed) {
  if (m > n) {
    throw SizeError("cannot sample " + std::to_string(m) + " points without replacement from " +
                    std::to_string(n));
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  // partial Fisher-Yates
  for (std::size_t i = 0; i < m; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(m);
  return idx;
}

PointCloud sample_without_replacement(const PointCloud& cloud, std::size_t m,
                                      std::uint64_t seed) {
  return select(cloud, sample_indices_without_replacement(cloud.size(), m, seed));
}

PointCloud select(const PointCloud& cloud, const std::vector<std::size_t>& indices) {
  PointCloud out;
  out.points.reserve(indices.size());
  for (std::size_t i : indices) out.points.push_back(cloud.points.at(i));
  if (cloud.labels) {
    std::vector<std::uint32_t> labels;
    labels.reserve(indices.size());
    for (std::size_t i : indices) labels.push_back(cloud.labels->at(i));
    out.labels = std::move(labels);
  }
  return out;
}

PointCloud concatenate(const std::vector<PointCloud>& parts) {
  PointCloud out;
  bool all_labeled = !parts.empty();
  std::size_t total = 0;
  for (const auto& p : parts) {
    total += p.size();
    all_labeled = all_labeled && p.labels.has_value();
  }
  out.points.reserve(total);
  for (const auto& p : parts) out.points.insert(out.points.end(), p.points.begin(), p.points.end());
  if (all_labeled) {
    std::vector<std::uint32_t> labels;
    labels.reserve(total);
    for (const auto& p : parts) labels.insert(labels.end(), p.labels->begin(), p.labels->end());
    out.labels = std::move(labels);
  }
  return out;
}

}  // namespace scenediff
