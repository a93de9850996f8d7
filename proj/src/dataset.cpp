#include "scenediff/dataset.hpp"

#include "scenediff/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <unordered_set>

namespace scenediff {

void PipelineConfig::validate() const {
  if (!(range_m > 0.0)) throw InvalidArgument("range must be positive");
  if (n_input < 1 || n_gt < 1) throw InvalidArgument("point counts must be >= 1");
  if (n_input > n_gt) throw InvalidArgument("n_input must not exceed n_gt");
  if (dedup_resolution && !(*dedup_resolution > 0.0)) {
    throw InvalidArgument("dedup resolution must be positive");
  }
}

PointCloud build_map(std::span<const PosedScan> scans, const PipelineConfig& config) {
  if (scans.empty()) throw EmptyInputError("map building needs at least one scan");
  if (config.dedup_resolution && !(*config.dedup_resolution > 0.0)) {
    throw InvalidArgument("dedup resolution must be positive");
  }
  std::vector<PointCloud> parts;
  parts.reserve(scans.size());
  for (std::size_t s = 0; s < scans.size(); ++s) {
    const PosedScan& scan = scans[s];
    try {
      scan.cloud.validate();
    } catch (const SizeError& e) {
      throw SizeError("scan " + std::to_string(s) + ": " + e.what());
    }
    std::vector<std::size_t> keep;
    keep.reserve(scan.cloud.size());
    for (std::size_t i = 0; i < scan.cloud.size(); ++i) {
      if (scan.cloud.labels && config.moving_label_ids.count((*scan.cloud.labels)[i])) continue;
      keep.push_back(i);
    }
    parts.push_back(transform(select(scan.cloud, keep), scan.pose));
  }
  PointCloud map = concatenate(parts);
  if (!config.dedup_resolution) return map;

  std::unordered_set<VoxelKey, VoxelKeyHash> seen;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < map.size(); ++i) {
    if (seen.insert(voxel_key(map.points[i], *config.dedup_resolution)).second) keep.push_back(i);
  }
  return select(map, keep);
}

ScenePair make_pair(const PointCloud& scan, const RigidPose& pose, const PointCloud& map,
                    const PipelineConfig& config, std::uint64_t seed) {
  config.validate();
  if (map.empty()) throw EmptyInputError("ground-truth map is empty");
  ScenePair pair;
  pair.center_pose = pose;
  pair.input = fps(crop_range(scan, config.range_m), config.n_input, seed);

  const PointCloud region = crop_range(transform(map, pose.inverse()), config.range_m);
  if (region.size() < config.n_gt) {
    throw RegionTooSparseError("map region around the scan holds " + std::to_string(region.size()) +
                               " points, " + std::to_string(config.n_gt) + " required");
  }
  pair.gt = sample_without_replacement(region, config.n_gt, seed);
  return pair;
}

// ---------------------------------------------------------------------------

void SceneSpec::validate() const {
  if (!(extent > 0.0)) throw InvalidArgument("scene extent must be positive");
  if (n_boxes < 0) throw InvalidArgument("box count must be >= 0");
  if (!(box_min_size > 0.0) || !(box_max_size >= box_min_size) || !(box_max_height > 0.0)) {
    throw InvalidArgument("box size range is invalid");
  }
  if (n_boxes > 0 && !(box_max_size < extent)) {
    throw InvalidArgument("boxes must fit inside the scene extent");
  }
  if (n_gt < 1 || n_scan < 1) throw InvalidArgument("point counts must be >= 1");
  if (!(sensor_height > 0.0)) throw InvalidArgument("sensor height must be positive");
  if (n_rings < 1 || n_azimuth < 1) throw InvalidArgument("ring pattern must be non-empty");
  if (!(elevation_min_deg <= elevation_max_deg) || !(elevation_max_deg < 90.0) ||
      !(elevation_min_deg > -90.0)) {
    throw InvalidArgument("elevation range is invalid");
  }
}

namespace {

/// Axis-aligned rectangle with one fixed axis.
struct Face {
  int fixed_axis;
  double fixed_value;
  Eigen::Vector3d lo;
  Eigen::Vector3d hi;

  double area() const {
    double a = 1.0;
    for (int ax = 0; ax < 3; ++ax) {
      if (ax != fixed_axis) a *= hi[ax] - lo[ax];
    }
    return a;
  }

  Point3 sample(std::mt19937_64& rng) const {
    Point3 p;
    for (int ax = 0; ax < 3; ++ax) {
      if (ax == fixed_axis) {
        p[ax] = fixed_value;
      } else {
        p[ax] = std::uniform_real_distribution<double>(lo[ax], hi[ax])(rng);
      }
    }
    return p;
  }

  double distance(const Point3& p) const {
    Point3 q = p;
    for (int ax = 0; ax < 3; ++ax) {
      q[ax] = ax == fixed_axis ? fixed_value : std::clamp(p[ax], lo[ax], hi[ax]);
    }
    return (p - q).norm();
  }
};

std::vector<Face> scene_faces(const SceneSpec& spec, std::span<const Box> boxes) {
  std::vector<Face> faces;
  const double e = spec.extent;
  faces.push_back({2, 0.0, {-e, -e, 0.0}, {e, e, 0.0}});
  for (const Box& b : boxes) {
    faces.push_back({0, b.min.x(), b.min, {b.min.x(), b.max.y(), b.max.z()}});
    faces.push_back({0, b.max.x(), {b.max.x(), b.min.y(), b.min.z()}, b.max});
    faces.push_back({1, b.min.y(), b.min, {b.max.x(), b.min.y(), b.max.z()}});
    faces.push_back({1, b.max.y(), {b.min.x(), b.max.y(), b.min.z()}, b.max});
    faces.push_back({2, b.max.z(), {b.min.x(), b.min.y(), b.max.z()}, b.max});
  }
  return faces;
}

bool inside_footprint(const Point3& p, std::span<const Box> boxes) {
  for (const Box& b : boxes) {
    if (p.x() > b.min.x() && p.x() < b.max.x() && p.y() > b.min.y() && p.y() < b.max.y()) return true;
  }
  return false;
}

/// Ray parameter of the first hit with an axis-aligned box, or +inf.
double ray_box(const Point3& origin, const Eigen::Vector3d& dir, const Box& b) {
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  for (int ax = 0; ax < 3; ++ax) {
    if (dir[ax] == 0.0) {
      if (origin[ax] < b.min[ax] || origin[ax] > b.max[ax]) return std::numeric_limits<double>::infinity();
      continue;
    }
    double t0 = (b.min[ax] - origin[ax]) / dir[ax];
    double t1 = (b.max[ax] - origin[ax]) / dir[ax];
    if (t0 > t1) std::swap(t0, t1);
    t_near = std::max(t_near, t0);
    t_far = std::min(t_far, t1);
  }
  if (t_near > t_far || t_near <= 0.0) return std::numeric_limits<double>::infinity();
  return t_near;
}

}  // namespace

double distance_to_scene_surface(const Point3& p, const SceneSpec& spec,
                                 std::span<const Box> boxes) {
  double best = std::numeric_limits<double>::infinity();
  for (const Face& f : scene_faces(spec, boxes)) best = std::min(best, f.distance(p));
  return best;
}

SyntheticScene generate_synthetic_scene(const SceneSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SyntheticScene scene;

  for (int b = 0; b < spec.n_boxes; ++b) {
    for (int attempt = 0; attempt < 200; ++attempt) {
      const double sx = spec.box_min_size + unit(rng) * (spec.box_max_size - spec.box_min_size);
      const double sy = spec.box_min_size + unit(rng) * (spec.box_max_size - spec.box_min_size);
      const double sz = 0.5 * spec.box_max_height + unit(rng) * 0.5 * spec.box_max_height;
      const double cx = (unit(rng) * 2.0 - 1.0) * (spec.extent - 0.5 * sx);
      const double cy = (unit(rng) * 2.0 - 1.0) * (spec.extent - 0.5 * sy);
      const Box box{{cx - 0.5 * sx, cy - 0.5 * sy, 0.0}, {cx + 0.5 * sx, cy + 0.5 * sy, sz}};
      // distance from the sensor axis to the footprint
      const double dx = std::max({box.min.x(), 0.0 - box.max.x(), 0.0});
      const double dy = std::max({box.min.y(), 0.0 - box.max.y(), 0.0});
      if (std::hypot(dx, dy) < spec.clearance) continue;
      bool overlaps = false;
      for (const Box& o : scene.boxes) {
        overlaps = overlaps || (box.min.x() < o.max.x() && box.max.x() > o.min.x() &&
                                box.min.y() < o.max.y() && box.max.y() > o.min.y());
      }
      if (overlaps) continue;
      scene.boxes.push_back(box);
      break;
    }
  }

  const std::vector<Face> faces = scene_faces(spec, scene.boxes);
  std::vector<double> areas;
  for (const Face& f : faces) areas.push_back(f.area());
  std::discrete_distribution<std::size_t> pick_face(areas.begin(), areas.end());
  scene.dense_gt.points.reserve(spec.n_gt);
  while (scene.dense_gt.size() < spec.n_gt) {
    const std::size_t f = pick_face(rng);
    const Point3 p = faces[f].sample(rng);
    if (f == 0 && inside_footprint(p, scene.boxes)) continue;
    scene.dense_gt.points.push_back(p);
  }

  const Point3 sensor(0.0, 0.0, spec.sensor_height);
  PointCloud hits;
  constexpr double deg = std::numbers::pi / 180.0;
  for (int r = 0; r < spec.n_rings; ++r) {
    const double elev =
        spec.n_rings == 1
            ? spec.elevation_min_deg
            : spec.elevation_min_deg + (spec.elevation_max_deg - spec.elevation_min_deg) * r / (spec.n_rings - 1);
    for (int a = 0; a < spec.n_azimuth; ++a) {
      const double az = 2.0 * std::numbers::pi * a / spec.n_azimuth;
      const Eigen::Vector3d dir(std::cos(elev * deg) * std::cos(az), std::cos(elev * deg) * std::sin(az),
                                std::sin(elev * deg));
      double t_hit = dir.z() < 0.0 ? -spec.sensor_height / dir.z() : std::numeric_limits<double>::infinity();
      for (const Box& b : scene.boxes) t_hit = std::min(t_hit, ray_box(sensor, dir, b));
      if (!std::isfinite(t_hit)) continue;
      Point3 p = sensor + t_hit * dir;
      if (std::abs(p.x()) > spec.extent || std::abs(p.y()) > spec.extent) continue;
      if (std::abs(p.z()) < 1e-12) p.z() = 0.0;
      hits.points.push_back(p);
    }
  }
  if (hits.empty()) throw InvalidArgument("ring pattern produced no hits inside the scene");
  scene.sparse_scan = hits.size() > spec.n_scan ? fps(hits, spec.n_scan, rng()) : hits;
  return scene;
}

}  // namespace scenediff
