#pragma once

#include "scenediff/geometry.hpp"
#include "scenediff/params.hpp"
#include "scenediff/predictor.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

namespace scenediff {

enum class Activation : std::uint32_t { SiLU = 0 };

struct ModelConfig {
  int d_t = 96;                                ///< temporal embedding size
  int d_c = 32;                                ///< condition embedding size
  std::vector<int> layer_dims{32, 32, 32, 32}; ///< backbone hidden widths
  int n_condition_points = 64;                 ///< N', condition downsample size
  Activation activation = Activation::SiLU;
  double input_scale = 0.1;                    ///< meters -> network units
  std::uint64_t fps_seed = 0;                  ///< start index of the condition FPS

  void validate() const;
  /// Hidden layers plus the output layer.
  int layer_count() const { return static_cast<int>(layer_dims.size()) + 1; }
  /// Feature width entering layer l (3 for the first layer).
  int in_dim(int layer) const;
  /// Width produced by layer l (3 for the output layer).
  int out_dim(int layer) const;
};

/// Sinusoidal step encoding: [2i] = sin(t / 10000^(2i/d)), [2i+1] = cos(same).
Eigen::VectorXd temporal_embedding(double t, int d_t);

/// Encoded condition points: positions (meters) and one d_c feature column
/// per point.
struct ConditionSet {
  PointCloud positions;
  Eigen::MatrixXd features;     // d_c x N'
  Eigen::MatrixXd pre_features; // encoder pre-activation, kept for backprop
};

/// One layer's conditioning weights, with d = feature width of that layer.
struct ConditioningWeights {
  Eigen::MatrixXd cond_weight;  // d x d_c
  Eigen::VectorXd cond_bias;    // d
  Eigen::MatrixXd time_weight;  // d x d_t
  Eigen::VectorXd time_bias;    // d
  Eigen::MatrixXd proj_weight;  // d x 2d, columns [condition | time]
  Eigen::VectorXd proj_bias;    // d
};

/// F' = W' (.) F where, for each feature column i,
///   C_i  = silu(cond_weight * condition_features[:, nearest[i]] + cond_bias)
///   tau_l = silu(time_weight * tau + time_bias)
///   W'_i = proj_weight * [C_i; tau_l] + proj_bias.
/// A null token is passed as a single condition column with every nearest
/// index 0.
Eigen::MatrixXd conditioning_block(const Eigen::MatrixXd& features,
                                   std::span<const std::size_t> nearest,
                                   const Eigen::MatrixXd& condition_features,
                                   const Eigen::VectorXd& tau, const ConditioningWeights& w);

/// L_diff: mean over points and coordinates of (eps - eps_pred)^2.
double loss_diff(const PointVectors& eps_true, const PointVectors& eps_pred);

struct RegLoss {
  double mean = 0.0;  ///< (pooled mean)^2
  double std = 0.0;   ///< (pooled population std - 1)^2
};

/// Pooled over every coordinate of every point.
RegLoss loss_reg(const PointVectors& eps_pred);

/// L = L_diff + r (L_mean + L_std).
double loss_total(double l_diff, double l_mean, double l_std, double r);

struct LossBreakdown {
  double total = 0.0;
  double diff = 0.0;
  double mean = 0.0;
  double std = 0.0;
  int t = 0;
  bool null_token = false;
};

/// One fully specified training evaluation: all randomness already drawn.
struct TrainingExample {
  PointCloud noisy;
  PointVectors eps;
  std::optional<PointCloud> condition;  ///< nullopt trains the null token
  int t = 1;
};

/// Per-point MLP noise predictor with the layer-wise conditioning block in
/// front of every layer (hidden layers and the output layer).
///
/// Backbone: F_0 = x; layer l consumes [F'_l ; x] where F'_l is the
/// conditioned feature, hidden layers use SiLU, the output layer is affine.
/// The condition encoder is FPS to N' points followed by a per-point SiLU
/// layer; the null token is a learned d_c vector used in place of every
/// condition lookup.
class ToyNoisePredictor final : public NoisePredictor {
 public:
  ToyNoisePredictor(ModelConfig config, Eigen::VectorXd weights);
  static ToyNoisePredictor create(const ModelConfig& config, std::uint64_t seed);

  ToyNoisePredictor(const ToyNoisePredictor& other);
  ToyNoisePredictor& operator=(const ToyNoisePredictor& other);

  const ModelConfig& config() const noexcept { return config_; }
  const ParamLayout& layout() const noexcept { return layout_; }
  const Eigen::VectorXd& weights() const noexcept { return weights_; }
  void set_weights(Eigen::VectorXd weights);

  /// FPS to N' points, then the per-point encoder. Throws SizeError when the
  /// scan holds fewer than N' points.
  ConditionSet encode_condition(const PointCloud& scan) const;

  PointVectors predict(const PointCloud& noisy, const Condition& condition,
                       int t) const override;

  /// Prediction against an already encoded condition (nullptr = null token).
  PointVectors predict_encoded(const PointCloud& noisy, const ConditionSet* condition,
                               int t) const;

  ConditioningWeights conditioning_weights(int layer) const;

  /// Total loss (and its breakdown) for a fixed example; fills `grad` with
  /// dL/dweights when non-null.
  LossBreakdown loss_and_gradient(const TrainingExample& example, double reg_weight,
                                  Eigen::VectorXd* grad) const;

  /// Parameter ids, in declaration order.
  struct LayerIds {
    std::size_t cond_w, cond_b, time_w, time_b, proj_w, proj_b, layer_w, layer_b;
  };
  std::size_t encoder_weight_id() const noexcept { return encoder_w_; }
  std::size_t encoder_bias_id() const noexcept { return encoder_b_; }
  std::size_t null_token_id() const noexcept { return null_token_; }
  const LayerIds& layer_ids(int layer) const { return layers_.at(static_cast<std::size_t>(layer)); }

 private:
  struct Forward;
  struct ZeroInit {};

  ToyNoisePredictor(ModelConfig config, ZeroInit);

  void build_layout();
  void forward(const PointCloud& noisy, const Eigen::MatrixXd& cond_features,
               std::span<const std::size_t> nearest, int t, Forward& fwd) const;
  std::vector<std::size_t> nearest_condition(const PointCloud& noisy,
                                             const ConditionSet* condition) const;
  Eigen::MatrixXd null_features() const;

  ModelConfig config_;
  ParamLayout layout_;
  Eigen::VectorXd weights_;
  std::size_t encoder_w_ = 0;
  std::size_t encoder_b_ = 0;
  std::size_t null_token_ = 0;
  std::vector<LayerIds> layers_;

  // Last encoded condition, reused while the condition points and weights
  // stay the same (the sampler asks twice per step with one condition).
  mutable std::mutex cache_mutex_;
  mutable std::optional<std::vector<Point3>> cached_points_;
  mutable std::optional<ConditionSet> cached_condition_;
};

}  // namespace scenediff
