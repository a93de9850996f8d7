#pragma once

#include "scenediff/geometry.hpp"
#include "scenediff/params.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace scenediff {

struct RefineConfig {
  int kappa = 6;                      ///< offsets per point
  double max_offset = 0.10;           ///< tanh output scale, meters
  double jitter_sigma = 0.05;         ///< training augmentation, meters
  std::vector<int> hidden_dims{64, 64};
  int context_k = 8;                  ///< neighbours in the local-shape feature
  double input_scale = 0.1;
  double local_scale = 10.0;
  double learning_rate = 1e-4;
  double weight_decay = 1e-4;
  int epochs = 5;
  int batch_size = 8;
  std::uint64_t seed = 0;

  void validate() const;
};

/// L_CD(A, B) = mean over a of min_b |a - b|^2 (one direction).
double chamfer_sq(const PointCloud& a, const PointCloud& b);

/// L_CD(gt, pred) + L_CD(pred, gt), no halving.
double refine_loss(const PointCloud& gt, const PointCloud& pred);

/// Adds iid N(0, sigma^2) to every coordinate.
PointCloud jitter(const PointCloud& cloud, double sigma, std::uint64_t seed);

/// Per-point MLP emitting 3 * kappa offsets, squashed by max_offset * tanh.
///
/// Each point sees its scaled coordinates and its offset from the mean of its
/// context_k nearest neighbours in the input cloud.
class RefineNet {
 public:
  RefineNet(RefineConfig config, Eigen::VectorXd weights);
  static RefineNet create(const RefineConfig& config, std::uint64_t seed);
  /// All weights zero: every offset is tanh(0) = 0.
  static RefineNet zeros(const RefineConfig& config);

  const RefineConfig& config() const noexcept { return config_; }
  const ParamLayout& layout() const noexcept { return layout_; }
  const Eigen::VectorXd& weights() const noexcept { return weights_; }
  void set_weights(Eigen::VectorXd weights);

  /// 6 x N network input for a cloud.
  Eigen::MatrixXd input_features(const PointCloud& cloud) const;

  /// 3*kappa x N, offset j of point i in rows [3j, 3j+3).
  Eigen::MatrixXd offsets(const PointCloud& cloud) const;

  /// refine_loss(gt, upsample(input)) and, when `grad` is non-null, its
  /// gradient with nearest-neighbour assignments held fixed.
  double loss_and_gradient(const PointCloud& input, const Eigen::MatrixXd& features,
                           const PointCloud& gt, Eigen::VectorXd* grad) const;

 private:
  struct ZeroInit {};
  RefineNet(RefineConfig config, ZeroInit);
  void build_layout();
  Eigen::MatrixXd forward(const Eigen::MatrixXd& features, const Eigen::VectorXd& weights,
                          std::vector<Eigen::MatrixXd>* activations,
                          std::vector<Eigen::MatrixXd>* pre) const;

  RefineConfig config_;
  ParamLayout layout_;
  Eigen::VectorXd weights_;
  std::vector<std::pair<std::size_t, std::size_t>> layers_;  // (weight, bias) ids
};

/// Output size kappa * |cloud|; point i*kappa + j = p_i + offset_j(p_i).
PointCloud refine_upsample(const PointCloud& cloud, const RefineNet& net);

struct RefinePair {
  PointCloud input;  ///< jittered copy of gt
  PointCloud gt;
};

/// One pair per clean cloud, jittered with config.jitter_sigma.
std::vector<RefinePair> make_refine_pairs(std::span<const PointCloud> clean,
                                          const RefineConfig& config);

struct RefineHistory {
  double initial_loss = 0.0;  ///< mean loss over the dataset before training
  std::vector<double> epoch_losses;
  double final_loss = 0.0;    ///< mean loss over the dataset after training
};

RefineHistory train_refine(RefineNet& net, std::span<const RefinePair> dataset,
                           const RefineConfig& config,
                           const std::function<void(int, double)>& on_epoch = {});

}  // namespace scenediff
