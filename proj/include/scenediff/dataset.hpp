#pragma once

#include "scenediff/geometry.hpp"

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <vector>

namespace scenediff {

/// Training/evaluation unit. Both clouds live in the scan's local frame.
struct ScenePair {
  PointCloud input;
  PointCloud gt;
  RigidPose center_pose;
};

struct PipelineConfig {
  double range_m = 50.0;
  std::size_t n_input = 18000;
  std::size_t n_gt = 180000;
  std::set<std::uint32_t> moving_label_ids{252, 253, 254, 255, 256, 257, 258, 259};
  std::optional<double> dedup_resolution;  ///< off by default

  void validate() const;
};

struct PosedScan {
  PointCloud cloud;  ///< sensor frame; labels optional
  RigidPose pose;    ///< sensor -> world
};

/// Drops moving points (by label), moves every scan to the world frame and
/// concatenates in scan order. With dedup on, keeps the first point of each
/// voxel.
PointCloud build_map(std::span<const PosedScan> scans, const PipelineConfig& config);

/// input = fps(crop_range(scan)), gt = map points within range of the scan
/// origin, expressed in the scan frame, sampled without replacement.
/// Throws RegionTooSparseError when the region holds fewer than n_gt points.
ScenePair make_pair(const PointCloud& scan, const RigidPose& pose, const PointCloud& map,
                    const PipelineConfig& config, std::uint64_t seed);

/// Axis-aligned box resting on the ground plane.
struct Box {
  Eigen::Vector3d min;
  Eigen::Vector3d max;
};

struct SceneSpec {
  double extent = 10.0;           ///< ground plane covers [-extent, extent]^2
  int n_boxes = 3;
  double box_min_size = 1.0;
  double box_max_size = 3.0;
  double box_max_height = 2.0;
  double clearance = 2.5;         ///< boxes keep this far from the sensor axis
  std::size_t n_gt = 2000;
  std::size_t n_scan = 200;
  double sensor_height = 1.8;
  int n_rings = 16;
  double elevation_min_deg = -25.0;
  double elevation_max_deg = -3.0;
  int n_azimuth = 180;

  void validate() const;
};

struct SyntheticScene {
  PointCloud dense_gt;
  PointCloud sparse_scan;
  std::vector<Box> boxes;
};

/// Ground plane z = 0 plus box side and top faces, sampled uniformly by area.
/// The scan casts a ring pattern of rays from (0, 0, sensor_height), keeps
/// first hits inside the extent, then FPS-reduces to n_scan points.
SyntheticScene generate_synthetic_scene(const SceneSpec& spec, std::uint64_t seed);

/// Distance from p to the nearest sampled surface of the scene (ground
/// patch or box face).
double distance_to_scene_surface(const Point3& p, const SceneSpec& spec,
                                 std::span<const Box> boxes);

}  // namespace scenediff
