#include "scenediff/training.hpp"

#include "scenediff/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Geometry>

namespace scenediff {

void TrainConfig::validate() const {
  if (epochs < 1) throw InvalidArgument("epochs must be >= 1");
  if (!(learning_rate >= 0.0)) throw InvalidArgument("learning rate must be >= 0");
  if (lr_halving_period < 0) throw InvalidArgument("lr halving period must be >= 0");
  if (!(weight_decay >= 0.0)) throw InvalidArgument("weight decay must be >= 0");
  if (batch_size < 1) throw InvalidArgument("batch size must be >= 1");
  if (pair_repeats < 1) throw InvalidArgument("pair repeats must be >= 1");
  if (!(reg_weight >= 0.0)) throw InvalidArgument("regularization weight must be >= 0");
  if (!(null_prob >= 0.0 && null_prob <= 1.0)) throw InvalidArgument("null probability must be in [0, 1]");
}

double learning_rate_at(const TrainConfig& config, int epoch) {
  if (config.lr_halving_period <= 0) return config.learning_rate;
  return config.learning_rate * std::pow(0.5, epoch / config.lr_halving_period);
}

TrainingExample draw_training_example(const ScenePair& pair, const NoiseSchedule& sched,
                                      double null_prob, std::mt19937_64& rng, std::optional<int> t) {
  std::uniform_int_distribution<int> step(1, sched.steps());
  std::bernoulli_distribution drop(null_prob);
  TrainingExample ex;
  ex.t = t ? *t : step(rng);
  if (ex.t < 1 || ex.t > sched.steps()) throw InvalidArgument("training step outside [1, T]");
  ex.eps = gaussian_vectors(pair.gt.size(), rng);
  ex.noisy = forward_noise_local(pair.gt, ex.t, ex.eps, sched);
  ex.noisy.labels.reset();
  if (!drop(rng)) ex.condition = pair.input;
  return ex;
}

ScenePair rotate_yaw(const ScenePair& pair, double angle) {
  RigidPose yaw;
  yaw.rotation = Eigen::AngleAxisd(angle, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  ScenePair out;
  out.input = transform(pair.input, yaw);
  out.gt = transform(pair.gt, yaw);
  out.center_pose = pair.center_pose;
  return out;
}

std::vector<int> stratified_timesteps(std::size_t n, int total_steps, std::mt19937_64& rng) {
  if (total_steps < 1) throw InvalidArgument("schedule has no steps");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<int> ts(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double u = (static_cast<double>(k) + unit(rng)) / static_cast<double>(n);
    ts[k] = std::clamp(1 + static_cast<int>(u * total_steps), 1, total_steps);
  }
  std::shuffle(ts.begin(), ts.end(), rng);
  return ts;
}

NoiseModelTrainer::NoiseModelTrainer(ToyNoisePredictor& model, const NoiseSchedule& sched,
                                     TrainConfig config)
    : model_(model),
      sched_(sched),
      config_(config),
      optimizer_(model.layout().total_size(), AdamW::Options{0.9, 0.999, 1e-8, config.weight_decay}),
      rng_(config.seed) {
  config_.validate();
}

std::vector<LossBreakdown> NoiseModelTrainer::train_step(std::span<const ScenePair> batch,
                                                         double learning_rate) {
  std::vector<const ScenePair*> ptrs;
  for (const ScenePair& p : batch) ptrs.push_back(&p);
  return step(ptrs, learning_rate);
}

std::vector<LossBreakdown> NoiseModelTrainer::step(const std::vector<const ScenePair*>& batch,
                                                   double learning_rate, const int* steps) {
  if (batch.empty()) throw EmptyInputError("empty training batch");
  std::vector<LossBreakdown> losses;
  losses.reserve(batch.size());
  Eigen::VectorXd grad_sum = Eigen::VectorXd::Zero(model_.weights().size());
  Eigen::VectorXd grad;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto t = steps ? std::optional<int>(steps[b]) : std::nullopt;
    std::optional<ScenePair> rotated;
    if (config_.augment_yaw) {
      rotated = rotate_yaw(*batch[b], std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng_));
    }
    const ScenePair& pair = rotated ? *rotated : *batch[b];
    const TrainingExample ex = draw_training_example(pair, sched_, config_.null_prob, rng_, t);
    losses.push_back(model_.loss_and_gradient(ex, config_.reg_weight, &grad));
    grad_sum += grad;
  }
  grad_sum /= static_cast<double>(batch.size());
  Eigen::VectorXd w = model_.weights();
  optimizer_.step(w, grad_sum, learning_rate);
  model_.set_weights(std::move(w));
  return losses;
}

TrainHistory NoiseModelTrainer::train(std::span<const ScenePair> dataset,
                                      const std::function<void(const EpochStats&)>& on_epoch) {
  if (dataset.empty()) throw EmptyInputError("training dataset is empty");
  TrainHistory history;
  std::vector<std::size_t> order;
  for (int r = 0; r < config_.pair_repeats; ++r) {
    for (std::size_t i = 0; i < dataset.size(); ++i) order.push_back(i);
  }
  const auto batch_size = static_cast<std::size_t>(config_.batch_size);
  for (int epoch = 0; epoch < config_.epochs; ++epoch) {
    const double lr = learning_rate_at(config_, epoch);
    std::shuffle(order.begin(), order.end(), rng_);
    std::vector<int> epoch_steps;
    if (config_.stratified_t) epoch_steps = stratified_timesteps(order.size(), sched_.steps(), rng_);
    EpochStats stats;
    stats.epoch = epoch;
    stats.learning_rate = lr;
    std::size_t count = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
      std::vector<const ScenePair*> batch;
      for (std::size_t i = begin; i < std::min(order.size(), begin + batch_size); ++i) {
        batch.push_back(&dataset[order[i]]);
      }
      const int* steps = epoch_steps.empty() ? nullptr : epoch_steps.data() + begin;
      for (const LossBreakdown& lb : step(batch, lr, steps)) {
        stats.total += lb.total;
        stats.diff += lb.diff;
        stats.mean += lb.mean;
        stats.std += lb.std;
        ++count;
        history.steps.push_back(lb);
      }
    }
    const auto n = static_cast<double>(count);
    stats.total /= n;
    stats.diff /= n;
    stats.mean /= n;
    stats.std /= n;
    history.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return history;
}

TrainHistory train(ToyNoisePredictor& model, std::span<const ScenePair> dataset,
                   const NoiseSchedule& sched, const TrainConfig& config) {
  NoiseModelTrainer trainer(model, sched, config);
  return trainer.train(dataset);
}

}  // namespace scenediff
