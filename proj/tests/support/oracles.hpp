#pragma once

// Independent reference implementations used by the tests. Nothing here calls
// into the library's spatial index or metric code.

#include "scenediff/geometry.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <tuple>
#include <vector>

namespace oracle {

using scenediff::Point3;
using scenediff::PointCloud;

/// Linear scan; the first index wins ties.
std::size_t brute_nearest(const PointCloud& ref, const Point3& q);
double brute_nearest_distance(const PointCloud& ref, const Point3& q);

double brute_chamfer(const PointCloud& a, const PointCloud& b);
double brute_chamfer_sq(const PointCloud& a, const PointCloud& b);

std::set<std::tuple<long long, long long, long long>> brute_voxels(const PointCloud& c, double res);
double brute_iou(const PointCloud& a, const PointCloud& b, double res);
double brute_jsd_bev(const PointCloud& a, const PointCloud& b, double res);

/// Central difference of f at coordinate i.
double central_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                          const Eigen::VectorXd& w, Eigen::Index i, double h = 1e-5);

/// |a - n| / max(|a|, |n|, floor)
double relative_error(double analytic, double numeric, double floor = 1e-6);

/// alpha_bar_t via exp(sum log(1 - beta_s)), beta from the linear formula.
double log_sum_alpha_bar(int t, int total, double beta_start, double beta_end);

/// Refinement loss with nearest assignments frozen: every index pair is
/// fixed, so the loss is a plain sum of squared differences.
struct FrozenAssignment {
  std::vector<std::size_t> gt_to_pred;
  std::vector<std::size_t> pred_to_gt;
};
FrozenAssignment freeze_assignment(const PointCloud& gt, const PointCloud& pred);
double frozen_refine_loss(const PointCloud& gt, const PointCloud& pred, const FrozenAssignment& a);

// --- hand-rolled generators ------------------------------------------------

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng_); }
  std::size_t index(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_);
  }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(rng_); }

  PointCloud cloud(std::size_t n, double extent);
  /// Points on a coarse lattice, so exact ties are common.
  PointCloud lattice_cloud(std::size_t n, int cells, double spacing);
  Eigen::Matrix3Xd gaussian(std::size_t n);
  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

}  // namespace oracle
