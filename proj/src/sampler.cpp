#include "scenediff/sampler.hpp"

#include "scenediff/errors.hpp"

#include <cmath>
#include <string>

namespace scenediff {

void SamplerConfig::validate(const NoiseSchedule& sched) const {
  if (steps < 1 || steps > sched.steps()) {
    throw InvalidArgument("sampler steps must lie in [1, " + std::to_string(sched.steps()) + "]");
  }
  if (!std::isfinite(guidance)) throw InvalidArgument("guidance weight must be finite");
}

PointVectors cfg_combine(const PointVectors& eps_uncond, const PointVectors& eps_cond, double s) {
  if (eps_uncond.cols() != eps_cond.cols()) {
    throw SizeError("conditional and unconditional predictions differ in length");
  }
  // u + (c - u) can differ from c in the last bit
  if (s == 1.0) return eps_cond;
  return eps_uncond + s * (eps_cond - eps_uncond);
}

std::vector<int> sampling_timesteps(int total_steps, int steps) {
  if (total_steps < 1 || steps < 1 || steps > total_steps) {
    throw InvalidArgument("need 1 <= steps <= T");
  }
  std::vector<int> ts;
  ts.reserve(static_cast<std::size_t>(steps));
  if (steps == 1) {
    ts.push_back(total_steps);
    return ts;
  }
  const auto span = static_cast<std::int64_t>(total_steps - 1);
  for (int k = 0; k < steps; ++k) {
    ts.push_back(total_steps - static_cast<int>(span * k / (steps - 1)));
  }
  return ts;
}

double jump_coefficient(int t, int s, const NoiseSchedule& sched) {
  if (!(s < t)) throw InvalidArgument("reverse jump must decrease the step");
  return (1.0 - sched.alpha_bar(t) / sched.alpha_bar(s)) / sched.noise_scale(t);
}

double jump_sigma(int t, int s, const NoiseSchedule& sched, SigmaMode mode) {
  if (!(s < t)) throw InvalidArgument("reverse jump must decrease the step");
  const double beta_ts = 1.0 - sched.alpha_bar(t) / sched.alpha_bar(s);
  const double variance = (1.0 - sched.alpha_bar(s)) / (1.0 - sched.alpha_bar(t)) * beta_ts;
  return mode == SigmaMode::Std ? std::sqrt(variance) : variance;
}

PointCloud reverse_jump(const PointCloud& x_t, const PointVectors& eps_hat, int t, int s,
                        const NoiseSchedule& sched, const SamplerConfig& config, Rng& rng) {
  if (static_cast<std::size_t>(eps_hat.cols()) != x_t.size()) {
    throw SizeError("noise estimate length does not match the cloud");
  }
  if (t < 1 || t > sched.steps() || s < 0 || s >= t) {
    throw InvalidArgument("reverse jump " + std::to_string(t) + " -> " + std::to_string(s) +
                          " is out of range");
  }
  const double coeff = jump_coefficient(t, s, sched);
  PointCloud out;
  out.points.resize(x_t.size());
  for (std::size_t i = 0; i < x_t.size(); ++i) {
    out.points[i] = x_t.points[i] - coeff * eps_hat.col(static_cast<Eigen::Index>(i));
  }
  if (config.stochastic && s > 0) {
    const double sigma = jump_sigma(t, s, sched, config.sigma_mode);
    const PointVectors z = gaussian_vectors(x_t.size(), rng);
    for (std::size_t i = 0; i < out.size(); ++i) {
      out.points[i] += sigma * z.col(static_cast<Eigen::Index>(i));
    }
  }
  out.labels = x_t.labels;
  return out;
}

PointCloud reverse_step(const PointCloud& x_t, const PointVectors& eps_hat, int t,
                        const NoiseSchedule& sched, const SamplerConfig& config, Rng& rng) {
  return reverse_jump(x_t, eps_hat, t, t - 1, sched, config, rng);
}

PointCloud build_initial_noisy(const PointCloud& scan, std::size_t copies,
                               const NoiseSchedule& sched, std::uint64_t seed) {
  if (scan.empty()) throw EmptyInputError("cannot build a noisy cloud from an empty scan");
  PointCloud dense = replicate(scan, copies);
  Rng rng(seed);
  const PointVectors eps = gaussian_vectors(dense.size(), rng);
  return forward_noise_local(dense, sched.steps(), eps, sched);
}

namespace {

StepStats pooled_stats(int t, const PointVectors& eps) {
  StepStats st;
  st.t = t;
  const auto n = static_cast<double>(eps.size());
  if (n == 0) return st;
  st.mean = eps.sum() / n;
  st.stddev = std::sqrt((eps.array() - st.mean).square().sum() / n);
  return st;
}

}  // namespace

PointCloud sample(const NoisePredictor& predictor, const PointCloud& condition,
                  const PointCloud& init, const NoiseSchedule& sched,
                  const SamplerConfig& config, SampleTrace* trace) {
  config.validate(sched);
  const std::vector<int> ts = sampling_timesteps(sched.steps(), config.steps);
  Rng rng(config.seed);
  PointCloud x = init;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const int t = ts[k];
    const int s = k + 1 < ts.size() ? ts[k + 1] : 0;
    const PointVectors eps_null = predictor.predict(x, NullToken{}, t);
    const PointVectors eps_cond = predictor.predict(x, std::cref(condition), t);
    if (static_cast<std::size_t>(eps_null.cols()) != x.size() ||
        static_cast<std::size_t>(eps_cond.cols()) != x.size()) {
      throw SizeError("predictor returned the wrong number of noise vectors");
    }
    const PointVectors eps = cfg_combine(eps_null, eps_cond, config.guidance);
    if (trace) trace->steps.push_back(pooled_stats(t, eps));
    x = reverse_jump(x, eps, t, s, sched, config, rng);
  }
  return x;
}

PointVectors ConsistentOraclePredictor::predict(const PointCloud& noisy, const Condition&,
                                                int t) const {
  if (noisy.size() != base_.size()) {
    throw SizeError("oracle predictor called with " + std::to_string(noisy.size()) +
                    " points, base has " + std::to_string(base_.size()));
  }
  const double scale = sched_.noise_scale(t);
  PointVectors eps(3, static_cast<Eigen::Index>(noisy.size()));
  for (std::size_t i = 0; i < noisy.size(); ++i) {
    eps.col(static_cast<Eigen::Index>(i)) = (noisy.points[i] - base_.points[i]) / scale;
  }
  return eps;
}

std::unique_ptr<NoisePredictor> consistent_oracle_predictor(const PointCloud& base,
                                                            const NoiseSchedule& sched) {
  return std::make_unique<ConsistentOraclePredictor>(base, sched);
}

}  // namespace scenediff
