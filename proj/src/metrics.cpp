#include "scenediff/metrics.hpp"

#include "scenediff/errors.hpp"
#include "scenediff/parallel.hpp"
#include "scenediff/spatial_index.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <cstdio>
#include <set>
#include <sstream>

namespace scenediff {

namespace {

double mean_nearest_distance(const PointCloud& queries, const PointCloud& reference) {
  const KdTree tree(reference.points);
  std::vector<double> d(queries.size());
  parallel_for(queries.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) d[i] = tree.nearest(queries.points[i]).distance;
  });
  double sum = 0.0;
  for (double v : d) sum += v;
  return sum / static_cast<double>(queries.size());
}

void require_non_empty(const PointCloud& a, const PointCloud& b, const char* what) {
  if (a.empty() || b.empty()) throw EmptyInputError(std::string(what) + " of an empty cloud");
}

double kl_term(double p, double m) { return p > 0.0 ? p * std::log(p / m) : 0.0; }

}  // namespace

double chamfer_distance(const PointCloud& a, const PointCloud& b) {
  require_non_empty(a, b, "chamfer distance");
  return 0.5 * (mean_nearest_distance(a, b) + mean_nearest_distance(b, a));
}

std::map<std::pair<std::int64_t, std::int64_t>, double> bev_histogram(const PointCloud& cloud,
                                                                      double resolution) {
  std::map<std::pair<std::int64_t, std::int64_t>, double> hist;
  for (const VoxelKey& k : voxelize(cloud, resolution).occupied) hist[{k.x, k.y}] += 1.0;
  return hist;
}

double jsd_bev(const PointCloud& a, const PointCloud& b, double resolution) {
  require_non_empty(a, b, "BEV divergence");
  const auto ha = bev_histogram(a, resolution);
  const auto hb = bev_histogram(b, resolution);
  double total_a = 0.0;
  double total_b = 0.0;
  for (const auto& [k, v] : ha) total_a += v;
  for (const auto& [k, v] : hb) total_b += v;

  std::set<std::pair<std::int64_t, std::int64_t>> columns;
  for (const auto& [k, v] : ha) columns.insert(k);
  for (const auto& [k, v] : hb) columns.insert(k);

  double kl_a = 0.0;
  double kl_b = 0.0;
  for (const auto& col : columns) {
    const auto ia = ha.find(col);
    const auto ib = hb.find(col);
    const double p = ia == ha.end() ? 0.0 : ia->second / total_a;
    const double q = ib == hb.end() ? 0.0 : ib->second / total_b;
    const double m = 0.5 * (p + q);
    kl_a += kl_term(p, m);
    kl_b += kl_term(q, m);
  }
  // rounding can leave the sum a hair outside [0, ln 2]
  return std::clamp(0.5 * kl_a + 0.5 * kl_b, 0.0, std::numbers::ln2);
}

std::map<double, double> occupancy_iou(const PointCloud& a, const PointCloud& b,
                                       const std::vector<double>& resolutions) {
  require_non_empty(a, b, "occupancy IoU");
  std::map<double, double> out;
  for (double res : resolutions) {
    const VoxelGrid ga = voxelize(a, res);
    const VoxelGrid gb = voxelize(b, res);
    std::size_t inter = 0;
    for (const VoxelKey& k : ga.occupied) inter += gb.occupied.count(k);
    const std::size_t uni = ga.size() + gb.size() - inter;
    out[res] = static_cast<double>(inter) / static_cast<double>(uni);
  }
  return out;
}

std::string resolution_key(double resolution) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", resolution);
  return buf;
}

std::string MetricReport::to_key_value() const {
  std::ostringstream os;
  os.precision(17);
  os << "cd=" << cd << '\n' << "jsd_bev=" << jsd_bev << '\n';
  for (const auto& [res, v] : iou) os << "iou@" << resolution_key(res) << '=' << v << '\n';
  return os.str();
}

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["cd"] = cd;
  j["jsd_bev"] = jsd_bev;
  for (const auto& [res, v] : iou) j["iou@" + resolution_key(res)] = v;
  return j.dump();
}

MetricReport evaluate(const PointCloud& pred, const PointCloud& gt,
                      const std::vector<double>& iou_resolutions, double bev_resolution) {
  MetricReport r;
  r.cd = chamfer_distance(pred, gt);
  r.jsd_bev = jsd_bev(pred, gt, bev_resolution);
  r.iou = occupancy_iou(pred, gt, iou_resolutions);
  return r;
}

}  // namespace scenediff
