#include "scenediff/schedule.hpp"

#include "scenediff/errors.hpp"

#include <cmath>
#include <string>

namespace scenediff {

NoiseSchedule NoiseSchedule::linear(int steps, double beta_start, double beta_end) {
  if (steps < 2) throw InvalidArgument("schedule needs at least 2 steps");
  if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0)) {
    throw InvalidArgument("schedule requires 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  s.betas_.resize(static_cast<std::size_t>(steps));
  s.alphas_.resize(s.betas_.size());
  s.alpha_bars_.resize(s.betas_.size());
  double running = 1.0;
  for (int i = 0; i < steps; ++i) {
    const double beta =
        beta_start + static_cast<double>(i) / static_cast<double>(steps - 1) * (beta_end - beta_start);
    const auto u = static_cast<std::size_t>(i);
    s.betas_[u] = beta;
    s.alphas_[u] = 1.0 - beta;
    running *= s.alphas_[u];
    s.alpha_bars_[u] = running;
  }
  return s;
}

void NoiseSchedule::check_step(int t, int lowest) const {
  if (t < lowest || t > steps()) {
    throw InvalidArgument("diffusion step " + std::to_string(t) + " outside [" +
                          std::to_string(lowest) + ", " + std::to_string(steps()) + "]");
  }
}

double NoiseSchedule::beta(int t) const {
  check_step(t, 1);
  return betas_[static_cast<std::size_t>(t - 1)];
}

double NoiseSchedule::alpha(int t) const {
  check_step(t, 1);
  return alphas_[static_cast<std::size_t>(t - 1)];
}

double NoiseSchedule::alpha_bar(int t) const {
  check_step(t, 0);
  return t == 0 ? 1.0 : alpha_bars_[static_cast<std::size_t>(t - 1)];
}

double NoiseSchedule::noise_scale(int t) const { return std::sqrt(1.0 - alpha_bar(t)); }

namespace {

void check_noise(const PointCloud& cloud, const PointVectors& eps) {
  if (static_cast<std::size_t>(eps.cols()) != cloud.size()) {
    throw SizeError("noise has " + std::to_string(eps.cols()) + " vectors for " +
                    std::to_string(cloud.size()) + " points");
  }
}

}  // namespace

PointCloud forward_noise_global(const PointCloud& x0, int t, const PointVectors& eps,
                                const NoiseSchedule& sched) {
  check_noise(x0, eps);
  const double signal = std::sqrt(sched.alpha_bar(t));
  const double scale = sched.noise_scale(t);
  if (t < 1) throw InvalidArgument("forward noising needs t >= 1");
  PointCloud out;
  out.points.resize(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) {
    out.points[i] = signal * x0.points[i] + scale * eps.col(static_cast<Eigen::Index>(i));
  }
  out.labels = x0.labels;
  return out;
}

PointCloud forward_noise_local(const PointCloud& points, int t, const PointVectors& eps,
                               const NoiseSchedule& sched) {
  check_noise(points, eps);
  if (t < 1) throw InvalidArgument("forward noising needs t >= 1");
  const double scale = sched.noise_scale(t);
  PointCloud out;
  out.points.resize(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    out.points[i] = points.points[i] + scale * eps.col(static_cast<Eigen::Index>(i));
  }
  out.labels = points.labels;
  return out;
}

double noise_scale(int t, const NoiseSchedule& sched) {
  if (t < 1) throw InvalidArgument("noise scale needs t >= 1");
  return sched.noise_scale(t);
}

}  // namespace scenediff
