#pragma once

#include "scenediff/geometry.hpp"

#include <map>
#include <string>
#include <vector>

namespace scenediff {

/// Symmetric mean of non-squared nearest distances, meters:
/// 0.5 * (mean_a min_b |a-b| + mean_b min_a |a-b|).
double chamfer_distance(const PointCloud& a, const PointCloud& b);

/// Occupied-voxel count per (x, y) column after voxelizing at `resolution`.
std::map<std::pair<std::int64_t, std::int64_t>, double> bev_histogram(const PointCloud& cloud,
                                                                      double resolution);

/// Jensen-Shannon divergence (nats) between the normalized BEV histograms.
double jsd_bev(const PointCloud& a, const PointCloud& b, double resolution = 0.5);

/// |occ(A) & occ(B)| / |occ(A) | occ(B)| per resolution.
std::map<double, double> occupancy_iou(const PointCloud& a, const PointCloud& b,
                                       const std::vector<double>& resolutions);

struct MetricReport {
  double cd = 0.0;
  double jsd_bev = 0.0;
  std::map<double, double> iou;

  /// "cd=...\njsd_bev=...\niou@0.5=...\n"
  std::string to_key_value() const;
  /// One-line JSON object with the same keys.
  std::string to_json() const;
};

/// Formats a resolution the way report keys spell it ("0.5", "0.2", "0.1").
std::string resolution_key(double resolution);

MetricReport evaluate(const PointCloud& pred, const PointCloud& gt,
                      const std::vector<double>& iou_resolutions = {0.5, 0.2, 0.1},
                      double bev_resolution = 0.5);

}  // namespace scenediff
