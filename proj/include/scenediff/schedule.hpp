#pragma once

#include "scenediff/geometry.hpp"

#include <span>
#include <vector>

namespace scenediff {

/// Linear-beta diffusion schedule. Steps are 1-indexed: t in [1, T]; t = 0 is
/// the clean state, for which alpha_bar(0) = 1.
class NoiseSchedule {
 public:
  /// beta_t = beta_start + (t-1)/(T-1) * (beta_end - beta_start).
  static NoiseSchedule linear(int steps, double beta_start, double beta_end);

  /// 1000 steps, beta in [3.5e-5, 0.007].
  static NoiseSchedule reference() { return linear(1000, 3.5e-5, 0.007); }

  int steps() const noexcept { return static_cast<int>(betas_.size()); }
  double beta(int t) const;
  double alpha(int t) const;
  /// Defined on [0, T].
  double alpha_bar(int t) const;
  /// sqrt(1 - alpha_bar(t)), the local noise offset scale. Defined on [0, T].
  double noise_scale(int t) const;

  std::span<const double> betas() const noexcept { return betas_; }
  std::span<const double> alphas() const noexcept { return alphas_; }
  std::span<const double> alpha_bars() const noexcept { return alpha_bars_; }

  double beta_start() const noexcept { return betas_.front(); }
  double beta_end() const noexcept { return betas_.back(); }

 private:
  NoiseSchedule() = default;
  void check_step(int t, int lowest) const;

  std::vector<double> betas_;
  std::vector<double> alphas_;
  std::vector<double> alpha_bars_;
};

/// x^t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps, per point.
PointCloud forward_noise_global(const PointCloud& x0, int t, const PointVectors& eps,
                                const NoiseSchedule& sched);

/// p^t = p + sqrt(1 - abar_t) eps, per point; the signal is never scaled.
PointCloud forward_noise_local(const PointCloud& points, int t, const PointVectors& eps,
                               const NoiseSchedule& sched);

double noise_scale(int t, const NoiseSchedule& sched);

/// Standard-normal 3-vectors, one per point, drawn column by column.
template <typename Rng>
PointVectors gaussian_vectors(std::size_t count, Rng& rng);

}  // namespace scenediff

#include <random>

namespace scenediff {

template <typename Rng>
PointVectors gaussian_vectors(std::size_t count, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  PointVectors out(3, static_cast<Eigen::Index>(count));
  for (Eigen::Index i = 0; i < out.cols(); ++i) {
    out(0, i) = normal(rng);
    out(1, i) = normal(rng);
    out(2, i) = normal(rng);
  }
  return out;
}

}  // namespace scenediff
