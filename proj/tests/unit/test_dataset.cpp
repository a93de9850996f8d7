#include "oracles.hpp"

#include "scenediff/dataset.hpp"
#include "scenediff/errors.hpp"
#include "scenediff/metrics.hpp"

#include <doctest.h>

#include <Eigen/Geometry>

#include <set>

using namespace scenediff;

namespace {

PipelineConfig small_pipeline() {
  PipelineConfig c;
  c.range_m = 5.0;
  c.n_input = 100;
  c.n_gt = 1000;
  return c;
}

RigidPose yaw_pose(double yaw, Eigen::Vector3d t) {
  RigidPose p;
  p.rotation = Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  p.translation = t;
  return p;
}

}  // namespace

TEST_CASE("build_map examples") {
  oracle::Gen g(1);
  const PointCloud scan = g.cloud(50, 5.0);
  const PipelineConfig cfg;
  const std::vector<PosedScan> one{{scan, RigidPose::identity()}};
  CHECK(build_map(one, cfg).points == scan.points);

  PipelineConfig dedup = cfg;
  dedup.dedup_resolution = 0.05;
  const std::vector<PosedScan> twice{{scan, RigidPose::identity()}, {scan, RigidPose::identity()}};
  const PointCloud m = build_map(twice, dedup);
  const VoxelGrid v = voxelize(m, 0.05);
  CHECK(v.size() == m.size());
  CHECK(v.sorted_keys() == voxelize(scan, 0.05).sorted_keys());
  CHECK(build_map(twice, cfg).size() == 100);

  PointCloud moving = scan;
  moving.labels = std::vector<std::uint32_t>(50, 252);
  const std::vector<PosedScan> gone{{moving, RigidPose::identity()}};
  CHECK(build_map(gone, cfg).empty());

  PointCloud bad = scan;
  bad.labels = std::vector<std::uint32_t>(49, 1);
  const std::vector<PosedScan> mismatch{{scan, RigidPose::identity()}, {bad, RigidPose::identity()}};
  CHECK_THROWS_AS(build_map(mismatch, cfg), SizeError);
  CHECK_THROWS_AS(build_map(std::vector<PosedScan>{}, cfg), EmptyInputError);
}

TEST_CASE("build_map drops every moving point and applies poses") {
  oracle::Gen g(2);
  PipelineConfig cfg;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<PosedScan> scans;
    std::size_t kept = 0;
    for (int s = 0; s < 3; ++s) {
      PosedScan ps;
      ps.cloud = g.cloud(g.index(1, 60), 10.0);
      std::vector<std::uint32_t> labels;
      for (std::size_t i = 0; i < ps.cloud.size(); ++i) {
        // moving points sit exactly at z = 1000 so any survivor is easy to spot
        const bool mov = g.coin(0.3);
        labels.push_back(mov ? static_cast<std::uint32_t>(g.integer(252, 259)) : static_cast<std::uint32_t>(g.integer(0, 251)));
        if (mov) ps.cloud.points[i].z() = 1000.0;
        kept += mov ? 0 : 1;
      }
      ps.cloud.labels = labels;
      ps.pose = yaw_pose(g.uniform(-3, 3), {g.uniform(-5, 5), g.uniform(-5, 5), 0.0});
      scans.push_back(ps);
    }
    const PointCloud m = build_map(scans, cfg);
    CHECK(m.size() == kept);
    for (const auto& p : m.points) CHECK(p.z() < 500.0);
    // first scan's static points lead, transformed
    std::size_t i = 0;
    for (std::size_t k = 0; k < scans[0].cloud.size(); ++k) {
      if ((*scans[0].cloud.labels)[k] >= 252) continue;
      CHECK((m.points[i++] - scans[0].pose.apply(scans[0].cloud.points[k])).norm() < 1e-12);
    }
  }
}

TEST_CASE("make_pair") {
  oracle::Gen g(3);
  const PointCloud scan = g.cloud(300, 3.0);
  PointCloud map = replicate(scan, 20);
  for (auto& p : map.points) p += Point3(g.normal(), g.normal(), g.normal()) * 1e-3;
  const RigidPose pose = yaw_pose(0.7, {10, -4, 0.5});
  const PointCloud world = transform(map, pose);
  const PipelineConfig cfg = small_pipeline();

  const ScenePair pair = make_pair(scan, pose, world, cfg, 5);
  CHECK(pair.input.size() == 100);
  CHECK(pair.gt.size() == 1000);
  for (const auto& p : pair.input.points) CHECK(p.norm() <= cfg.range_m);
  for (const auto& p : pair.gt.points) CHECK(p.norm() <= cfg.range_m + 1e-9);
  CHECK((pair.center_pose.translation - pose.translation).norm() == 0.0);

  const ScenePair again = make_pair(scan, pose, world, cfg, 5);
  CHECK(again.input.points == pair.input.points);
  CHECK(again.gt.points == pair.gt.points);

  PipelineConfig greedy = cfg;
  greedy.n_gt = 100000;
  CHECK_THROWS_AS(make_pair(scan, pose, world, greedy, 5), RegionTooSparseError);
  CHECK_THROWS_AS(make_pair(scan, pose, PointCloud{}, cfg, 5), EmptyInputError);
}

TEST_CASE("pipeline config validation") {
  PipelineConfig c;
  CHECK_NOTHROW(c.validate());
  c.n_input = c.n_gt + 1;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = PipelineConfig{};
  c.range_m = 0.0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = PipelineConfig{};
  c.dedup_resolution = 0.0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

TEST_CASE("synthetic scene without boxes is a plane") {
  SceneSpec spec;
  spec.n_boxes = 0;
  const SyntheticScene s = generate_synthetic_scene(spec, 4);
  CHECK(s.boxes.empty());
  CHECK(s.dense_gt.size() == spec.n_gt);
  for (const auto& p : s.dense_gt.points) CHECK(p.z() == 0.0);
  for (const auto& p : s.sparse_scan.points) CHECK(std::abs(p.z()) < 1e-9);
}

TEST_CASE("synthetic scene with boxes") {
  SceneSpec spec;
  spec.n_boxes = 2;
  const SyntheticScene a = generate_synthetic_scene(spec, 11);
  const SyntheticScene b = generate_synthetic_scene(spec, 11);
  CHECK(a.dense_gt.points == b.dense_gt.points);
  CHECK(a.sparse_scan.points == b.sparse_scan.points);
  CHECK_FALSE(generate_synthetic_scene(spec, 12).dense_gt.points == a.dense_gt.points);
  CHECK(a.boxes.size() == 2);

  CHECK(a.sparse_scan.size() == spec.n_scan);
  CHECK(a.sparse_scan.size() < a.dense_gt.size());
  for (const auto& p : a.sparse_scan.points) CHECK(distance_to_scene_surface(p, spec, a.boxes) < 1e-6);
  for (const auto& p : a.dense_gt.points) {
    CHECK(distance_to_scene_surface(p, spec, a.boxes) < 1e-9);
    CHECK(std::abs(p.x()) <= spec.extent);
    CHECK(std::abs(p.y()) <= spec.extent);
  }
  CHECK(chamfer_distance(a.sparse_scan, a.dense_gt) > 0.0);
  CHECK(chamfer_distance(a.dense_gt, a.dense_gt) == 0.0);
}

TEST_CASE("synthetic scenes over many seeds keep their contracts") {
  oracle::Gen g(5);
  for (int trial = 0; trial < 10; ++trial) {
    SceneSpec spec;
    spec.n_boxes = g.integer(0, 4);
    spec.n_gt = g.index(200, 1500);
    spec.n_scan = g.index(20, 150);
    const SyntheticScene s = generate_synthetic_scene(spec, g.index(0, 1000));
    CHECK(s.dense_gt.size() == spec.n_gt);
    CHECK(s.sparse_scan.size() == spec.n_scan);
    for (const auto& box : s.boxes) {
      CHECK(box.min.z() == 0.0);
      CHECK(box.max.z() <= spec.box_max_height);
    }
  }
}

TEST_CASE("degenerate scene specs") {
  SceneSpec spec;
  spec.extent = 0.0;
  CHECK_THROWS_AS(generate_synthetic_scene(spec, 0), InvalidArgument);
  spec = SceneSpec{};
  spec.n_boxes = -1;
  CHECK_THROWS_AS(spec.validate(), InvalidArgument);
  spec = SceneSpec{};
  spec.n_scan = 0;
  CHECK_THROWS_AS(spec.validate(), InvalidArgument);
}
