#include "oracles.hpp"

#include "scenediff/errors.hpp"
#include "scenediff/metrics.hpp"

#include <doctest.h>

#include <nlohmann/json.hpp>

#include <cmath>
#include <numbers>

using namespace scenediff;

namespace {

PointCloud pts(std::initializer_list<Point3> ps) { return PointCloud(std::vector<Point3>(ps)); }

}  // namespace

TEST_CASE("chamfer_distance examples") {
  oracle::Gen g(1);
  const PointCloud a = g.cloud(30, 3.0);
  CHECK(chamfer_distance(a, a) == 0.0);
  CHECK(chamfer_distance(pts({{0, 0, 0}}), pts({{3, 4, 0}})) == 5.0);
  CHECK(chamfer_distance(pts({{0, 0, 0}, {1, 0, 0}}), pts({{0, 0, 0}})) == 0.25);
  CHECK_THROWS_AS(chamfer_distance(PointCloud{}, a), EmptyInputError);
  CHECK_THROWS_AS(chamfer_distance(a, PointCloud{}), EmptyInputError);
}

TEST_CASE("chamfer_distance agrees with brute force and is symmetric") {
  oracle::Gen g(2);
  for (int trial = 0; trial < 80; ++trial) {
    const bool lattice = g.coin();
    const PointCloud a = lattice ? g.lattice_cloud(g.index(1, 256), 4, 0.5) : g.cloud(g.index(1, 256), 3.0);
    const PointCloud b = lattice ? g.lattice_cloud(g.index(1, 256), 4, 0.5) : g.cloud(g.index(1, 256), 3.0);
    const double c = chamfer_distance(a, b);
    CHECK(c == doctest::Approx(oracle::brute_chamfer(a, b)).epsilon(1e-13));
    CHECK(c == doctest::Approx(chamfer_distance(b, a)).epsilon(1e-13));
  }
}

TEST_CASE("jsd_bev examples") {
  oracle::Gen g(3);
  const PointCloud a = g.cloud(50, 5.0);
  CHECK(jsd_bev(a, a) == 0.0);
  CHECK(jsd_bev(pts({{0.1, 0.1, 0}}), pts({{5.1, 0.1, 0}})) == doctest::Approx(std::numbers::ln2).epsilon(1e-14));

  // P = (1, 0), Q = (0.5, 0.5) over two columns
  const PointCloud p = pts({{0.1, 0.1, 0.1}});
  const PointCloud q = pts({{0.1, 0.1, 0.1}, {0.6, 0.1, 0.1}});
  const double expect = 0.5 * std::log(4.0 / 3.0) + 0.25 * std::log(2.0 / 3.0) + 0.25 * std::log(2.0);
  CHECK(jsd_bev(p, q) == doctest::Approx(expect).epsilon(1e-13));
  CHECK(expect == doctest::Approx(0.21576).epsilon(1e-4));

  // the histogram counts occupied voxels per column, not points
  const PointCloud stacked = pts({{0.1, 0.1, 0.1}, {0.2, 0.2, 0.2}, {0.6, 0.1, 0.1}, {0.6, 0.1, 0.7}});
  const auto h = bev_histogram(stacked, 0.5);
  CHECK(h.at({0, 0}) == 1.0);
  CHECK(h.at({1, 0}) == 2.0);

  CHECK_THROWS_AS(jsd_bev(PointCloud{}, a), EmptyInputError);
  CHECK_THROWS_AS(jsd_bev(a, a, 0.0), InvalidArgument);
}

TEST_CASE("jsd_bev range, oracle and grid translations") {
  oracle::Gen g(4);
  for (int trial = 0; trial < 60; ++trial) {
    const PointCloud a = g.cloud(g.index(1, 256), 4.0);
    const PointCloud b = g.cloud(g.index(1, 256), 4.0);
    const double res = g.coin() ? 0.5 : g.uniform(0.2, 2.0);
    const double j = jsd_bev(a, b, res);
    CHECK(j >= 0.0);
    CHECK(j <= std::numbers::ln2 + 1e-15);
    CHECK(j == doctest::Approx(oracle::brute_jsd_bev(a, b, res)).epsilon(1e-12));

    RigidPose shift;
    shift.translation = {res * g.integer(-5, 5), res * g.integer(-5, 5), 0.0};
    const double moved = jsd_bev(transform(a, shift), transform(b, shift), res);
    CHECK(moved == doctest::Approx(j).epsilon(1e-9));
  }
}

TEST_CASE("occupancy_iou examples") {
  oracle::Gen g(5);
  const PointCloud a = g.cloud(40, 3.0);
  for (const auto& [res, v] : occupancy_iou(a, a, {0.5, 0.2, 0.1})) CHECK(v == 1.0);
  const auto disjoint = occupancy_iou(pts({{0.1, 0.1, 0.1}}), pts({{3.1, 0.1, 0.1}}), {0.5});
  CHECK(disjoint.at(0.5) == 0.0);
  // {v1, v2} vs {v2, v3}
  const auto third = occupancy_iou(pts({{0.1, 0.1, 0.1}, {0.6, 0.1, 0.1}}),
                                   pts({{0.6, 0.1, 0.1}, {1.1, 0.1, 0.1}}), {0.5});
  CHECK(third.at(0.5) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK_THROWS_AS(occupancy_iou(a, PointCloud{}, {0.5}), EmptyInputError);
  CHECK_THROWS_AS(occupancy_iou(a, a, {0.5, -0.1}), InvalidArgument);
}

TEST_CASE("occupancy_iou oracle and monotone intersection") {
  oracle::Gen g(6);
  for (int trial = 0; trial < 60; ++trial) {
    const PointCloud a = g.cloud(g.index(2, 256), 2.0);
    const PointCloud b = g.cloud(g.index(1, 256), 2.0);
    const double res = g.uniform(0.1, 1.0);
    const double v = occupancy_iou(a, b, {res}).at(res);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    CHECK(v == doctest::Approx(oracle::brute_iou(a, b, res)).epsilon(1e-14));

    auto inter = [&](const PointCloud& x) {
      const auto vx = oracle::brute_voxels(x, res);
      const auto vb = oracle::brute_voxels(b, res);
      std::size_t n = 0;
      for (const auto& k : vx) n += vb.count(k);
      return n;
    };
    PointCloud fewer = a;
    fewer.points.resize(g.index(1, a.size() - 1));
    CHECK(inter(fewer) <= inter(a));
  }
}

TEST_CASE("report serialization") {
  MetricReport r;
  r.cd = 0.25;
  r.jsd_bev = 0.125;
  r.iou = {{0.5, 0.75}, {0.2, 0.5}, {0.1, 0.25}};
  const std::string kv = r.to_key_value();
  CHECK(kv.find("cd=0.25") != std::string::npos);
  CHECK(kv.find("jsd_bev=0.125") != std::string::npos);
  CHECK(kv.find("iou@0.5=0.75") != std::string::npos);
  CHECK(kv.find("iou@0.1=0.25") != std::string::npos);

  const auto j = nlohmann::json::parse(r.to_json());
  CHECK(j.at("cd").get<double>() == 0.25);
  CHECK(j.at("jsd_bev").get<double>() == 0.125);
  CHECK(j.at("iou@0.2").get<double>() == 0.5);
  CHECK(r.to_json().find('\n') == std::string::npos);

  CHECK(resolution_key(0.5) == "0.5");
  CHECK(resolution_key(0.1) == "0.1");

  oracle::Gen g(7);
  const PointCloud a = g.cloud(30, 2.0);
  const PointCloud b = g.cloud(30, 2.0);
  const MetricReport e = evaluate(a, b);
  CHECK(e.cd == chamfer_distance(a, b));
  CHECK(e.jsd_bev == jsd_bev(a, b));
  CHECK(e.iou.size() == 3);
}
