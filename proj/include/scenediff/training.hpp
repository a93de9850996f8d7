#pragma once

#include "scenediff/dataset.hpp"
#include "scenediff/noise_model.hpp"
#include "scenediff/params.hpp"
#include "scenediff/schedule.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace scenediff {

struct TrainConfig {
  int epochs = 20;
  double learning_rate = 1e-4;
  int lr_halving_period = 5;  ///< epochs; 0 disables halving
  double weight_decay = 1e-4;
  int batch_size = 2;
  int pair_repeats = 1;       ///< visits of every pair per epoch, fresh noise each time
  bool stratified_t = false;  ///< one t per equal-width stratum of [1, T] within an epoch
  bool augment_yaw = false;   ///< rotate each drawn pair about the z axis by a random angle
  double reg_weight = 5.0;
  double null_prob = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

/// learning_rate * 0.5^floor(epoch / lr_halving_period), epoch 0-based.
double learning_rate_at(const TrainConfig& config, int epoch);

struct EpochStats {
  int epoch = 0;
  double learning_rate = 0.0;
  double total = 0.0;
  double diff = 0.0;
  double mean = 0.0;
  double std = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  std::vector<LossBreakdown> steps;
};

/// Draws t ~ U[1, T] (unless `t` is given), per-point noise and the
/// null-token coin for one pair.
TrainingExample draw_training_example(const ScenePair& pair, const NoiseSchedule& sched,
                                      double null_prob, std::mt19937_64& rng,
                                      std::optional<int> t = std::nullopt);

/// Rotates input and gt together about the z axis.
ScenePair rotate_yaw(const ScenePair& pair, double angle);

/// n steps, one uniform draw from each of n equal-width strata of [1, T],
/// returned in random order. Each entry is marginally U[1, T].
std::vector<int> stratified_timesteps(std::size_t n, int total_steps, std::mt19937_64& rng);

class NoiseModelTrainer {
 public:
  NoiseModelTrainer(ToyNoisePredictor& model, const NoiseSchedule& sched, TrainConfig config);

  /// One optimizer update over a batch; gradients are averaged over pairs.
  std::vector<LossBreakdown> train_step(std::span<const ScenePair> batch, double learning_rate);

  /// epochs x batches of train_step over a per-epoch shuffle of the dataset.
  TrainHistory train(std::span<const ScenePair> dataset,
                     const std::function<void(const EpochStats&)>& on_epoch = {});

 private:
  std::vector<LossBreakdown> step(const std::vector<const ScenePair*>& batch, double learning_rate,
                                  const int* steps = nullptr);

  ToyNoisePredictor& model_;
  NoiseSchedule sched_;
  TrainConfig config_;
  AdamW optimizer_;
  std::mt19937_64 rng_;
};

TrainHistory train(ToyNoisePredictor& model, std::span<const ScenePair> dataset,
                   const NoiseSchedule& sched, const TrainConfig& config);

}  // namespace scenediff
