#pragma once

#include "scenediff/geometry.hpp"
#include "scenediff/predictor.hpp"
#include "scenediff/schedule.hpp"

#include <cstdint>
#include <memory>
#include <random>
#include <vector>

namespace scenediff {

enum class SigmaMode {
  Std,       ///< sigma_t = sqrt((1 - abar_{t-1}) / (1 - abar_t) * beta_t)
  Verbatim,  ///< the printed coefficient, without the square root
};

struct SamplerConfig {
  double guidance = 6.0;
  int steps = 50;
  bool stochastic = false;
  SigmaMode sigma_mode = SigmaMode::Std;
  std::uint64_t seed = 0;

  void validate(const NoiseSchedule& sched) const;
};

using Rng = std::mt19937_64;

/// eps' = eps_null + s (eps_cond - eps_null).
PointVectors cfg_combine(const PointVectors& eps_uncond, const PointVectors& eps_cond, double s);

/// Visited steps for a run of `steps` denoising steps: strictly decreasing,
/// starting at T and (for steps >= 2) ending at 1, spaced as evenly as
/// integer steps allow. steps == T visits every step.
std::vector<int> sampling_timesteps(int total_steps, int steps);

/// Coefficient applied to eps_hat when jumping from t to s < t:
/// (1 - abar_t / abar_s) / sqrt(1 - abar_t). For s = t - 1 this is the
/// single-step (1 - alpha_t) / sqrt(1 - abar_t).
double jump_coefficient(int t, int s, const NoiseSchedule& sched);

/// Standard deviation (or the raw variance, in verbatim mode) of the noise
/// term for a jump t -> s.
double jump_sigma(int t, int s, const NoiseSchedule& sched, SigmaMode mode);

/// x^s = x^t - jump_coefficient(t, s) eps_hat + sigma z. The noise term is
/// skipped when the config is deterministic or s == 0.
PointCloud reverse_jump(const PointCloud& x_t, const PointVectors& eps_hat, int t, int s,
                        const NoiseSchedule& sched, const SamplerConfig& config, Rng& rng);

/// One reverse step t -> t-1.
PointCloud reverse_step(const PointCloud& x_t, const PointVectors& eps_hat, int t,
                        const NoiseSchedule& sched, const SamplerConfig& config, Rng& rng);

/// replicate(scan, K), then local noising at t = T with fresh Gaussian noise
/// drawn from `seed`.
PointCloud build_initial_noisy(const PointCloud& scan, std::size_t copies,
                               const NoiseSchedule& sched, std::uint64_t seed);

/// Pooled statistics of the guided noise prediction at one visited step.
struct StepStats {
  int t = 0;
  double mean = 0.0;
  double stddev = 0.0;
};

struct SampleTrace {
  std::vector<StepStats> steps;
};

/// Runs config.steps guided reverse steps over sampling_timesteps(), ending at
/// the clean state. Records per-step noise statistics into `trace` if given.
PointCloud sample(const NoisePredictor& predictor, const PointCloud& condition,
                  const PointCloud& init, const NoiseSchedule& sched,
                  const SamplerConfig& config, SampleTrace* trace = nullptr);

/// Test oracle: eps_hat(x, t) = (x - base) / sqrt(1 - abar_t). Ignores the
/// condition.
class ConsistentOraclePredictor final : public NoisePredictor {
 public:
  ConsistentOraclePredictor(PointCloud base, const NoiseSchedule& sched)
      : base_(std::move(base)), sched_(sched) {}

  PointVectors predict(const PointCloud& noisy, const Condition& condition,
                       int t) const override;

 private:
  PointCloud base_;
  NoiseSchedule sched_;
};

std::unique_ptr<NoisePredictor> consistent_oracle_predictor(const PointCloud& base,
                                                            const NoiseSchedule& sched);

}  // namespace scenediff
