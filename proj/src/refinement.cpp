#include "scenediff/refinement.hpp"

#include "scenediff/errors.hpp"
#include "scenediff/parallel.hpp"
#include "scenediff/spatial_index.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace scenediff {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void RefineConfig::validate() const {
  if (kappa < 1) throw InvalidArgument("kappa must be >= 1");
  if (!(max_offset > 0.0)) throw InvalidArgument("max offset must be positive");
  if (!(jitter_sigma >= 0.0)) throw InvalidArgument("jitter sigma must be >= 0");
  if (context_k < 1) throw InvalidArgument("context size must be >= 1");
  for (int d : hidden_dims) {
    if (d < 1) throw InvalidArgument("hidden widths must be >= 1");
  }
  if (!(input_scale > 0.0) || !(local_scale > 0.0)) throw InvalidArgument("feature scales must be positive");
  if (!(learning_rate >= 0.0) || !(weight_decay >= 0.0)) {
    throw InvalidArgument("learning rate and weight decay must be >= 0");
  }
  if (epochs < 1 || batch_size < 1) throw InvalidArgument("epochs and batch size must be >= 1");
}

double chamfer_sq(const PointCloud& a, const PointCloud& b) {
  if (a.empty() || b.empty()) throw EmptyInputError("chamfer distance of an empty cloud");
  const KdTree tree(b.points);
  std::vector<double> d2(a.size());
  parallel_for(a.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) d2[i] = tree.nearest_squared(a.points[i]).distance;
  });
  double sum = 0.0;
  for (double v : d2) sum += v;
  return sum / static_cast<double>(a.size());
}

double refine_loss(const PointCloud& gt, const PointCloud& pred) {
  return chamfer_sq(gt, pred) + chamfer_sq(pred, gt);
}

PointCloud jitter(const PointCloud& cloud, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw InvalidArgument("jitter sigma must be >= 0");
  PointCloud out = cloud;
  if (sigma == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, sigma);
  for (auto& p : out.points) {
    p.x() += normal(rng);
    p.y() += normal(rng);
    p.z() += normal(rng);
  }
  return out;
}

RefineNet::RefineNet(RefineConfig config, ZeroInit) : config_(std::move(config)) {
  config_.validate();
  build_layout();
  weights_ = VectorXd::Zero(static_cast<Eigen::Index>(layout_.total_size()));
}

RefineNet::RefineNet(RefineConfig config, VectorXd weights) : RefineNet(std::move(config), ZeroInit{}) {
  set_weights(std::move(weights));
}

void RefineNet::build_layout() {
  layout_ = ParamLayout{};
  layers_.clear();
  int in = 6;
  std::vector<int> dims = config_.hidden_dims;
  dims.push_back(3 * config_.kappa);
  for (std::size_t l = 0; l < dims.size(); ++l) {
    const std::string name = "layer" + std::to_string(l);
    const auto w = layout_.add_matrix(name + ".weight", dims[l], in);
    const auto b = layout_.add_vector(name + ".bias", dims[l]);
    layers_.emplace_back(w, b);
    in = dims[l];
  }
}

RefineNet RefineNet::create(const RefineConfig& config, std::uint64_t seed) {
  RefineNet net(config, ZeroInit{});
  VectorXd w = net.weights_;
  std::mt19937_64 seeder(seed);
  for (std::size_t l = 0; l < net.layers_.size(); ++l) {
    const auto [wid, bid] = net.layers_[l];
    init_dense(net.layout_.matrix(w, wid), net.layout_.vector(w, bid), seeder());
  }
  // small initial offsets
  net.layout_.matrix(w, net.layers_.back().first) *= 0.1;
  net.set_weights(std::move(w));
  return net;
}

RefineNet RefineNet::zeros(const RefineConfig& config) { return RefineNet(config, ZeroInit{}); }

void RefineNet::set_weights(VectorXd weights) {
  if (static_cast<std::size_t>(weights.size()) != layout_.total_size()) {
    throw SizeError("weight vector size does not match the refinement layout");
  }
  if (!weights.allFinite()) throw InvalidArgument("refinement weights must be finite");
  weights_ = std::move(weights);
}

MatrixXd RefineNet::input_features(const PointCloud& cloud) const {
  MatrixXd x(6, static_cast<Eigen::Index>(cloud.size()));
  if (cloud.empty()) return x;
  const KdTree tree(cloud.points);
  const auto k = std::min<std::size_t>(static_cast<std::size_t>(config_.context_k), cloud.size());
  parallel_for(cloud.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const Point3& p = cloud.points[i];
      Point3 mean = Point3::Zero();
      const auto nbrs = tree.k_nearest(p, k);
      for (const Neighbor& n : nbrs) mean += cloud.points[n.index];
      mean /= static_cast<double>(nbrs.size());
      const auto c = static_cast<Eigen::Index>(i);
      x.block<3, 1>(0, c) = p * config_.input_scale;
      x.block<3, 1>(3, c) = (p - mean) * config_.local_scale;
    }
  });
  return x;
}

MatrixXd RefineNet::forward(const MatrixXd& features, const VectorXd& weights,
                            std::vector<MatrixXd>* activations, std::vector<MatrixXd>* pre) const {
  MatrixXd h = features;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto [wid, bid] = layers_[l];
    MatrixXd z = (layout_.matrix(weights, wid) * h).colwise() + VectorXd(layout_.vector(weights, bid));
    if (activations) activations->push_back(h);
    if (l + 1 < layers_.size()) {
      h = act::silu(z);
    } else {
      h = z;
    }
    if (pre) pre->push_back(std::move(z));
  }
  return h;
}

namespace {

// tanh rounds to exactly 1 past ~19; stop short so offsets stay strictly inside the bound
MatrixXd bounded_tanh(const MatrixXd& raw) {
  return raw.array().max(-18.0).min(18.0).tanh().matrix();
}

}  // namespace

MatrixXd RefineNet::offsets(const PointCloud& cloud) const {
  const MatrixXd raw = forward(input_features(cloud), weights_, nullptr, nullptr);
  return config_.max_offset * bounded_tanh(raw);
}

namespace {

PointCloud apply_offsets(const PointCloud& cloud, const MatrixXd& offsets, int kappa) {
  PointCloud out;
  out.points.resize(cloud.size() * static_cast<std::size_t>(kappa));
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (int j = 0; j < kappa; ++j) {
      out.points[i * static_cast<std::size_t>(kappa) + static_cast<std::size_t>(j)] =
          cloud.points[i] + offsets.block<3, 1>(3 * j, static_cast<Eigen::Index>(i));
    }
  }
  return out;
}

}  // namespace

PointCloud refine_upsample(const PointCloud& cloud, const RefineNet& net) {
  if (cloud.empty()) throw EmptyInputError("cannot upsample an empty cloud");
  return apply_offsets(cloud, net.offsets(cloud), net.config().kappa);
}

double RefineNet::loss_and_gradient(const PointCloud& input, const MatrixXd& features,
                                    const PointCloud& gt, VectorXd* grad) const {
  if (input.empty() || gt.empty()) throw EmptyInputError("refinement loss of an empty cloud");
  std::vector<MatrixXd> acts;
  std::vector<MatrixXd> pres;
  const MatrixXd raw = forward(features, weights_, grad ? &acts : nullptr, grad ? &pres : nullptr);
  const MatrixXd th = bounded_tanh(raw);
  const int kappa = config_.kappa;
  const PointCloud pred = apply_offsets(input, config_.max_offset * th, kappa);

  const KdTree pred_tree(pred.points);
  const KdTree gt_tree(gt.points);
  std::vector<Neighbor> gt_to_pred(gt.size());
  std::vector<Neighbor> pred_to_gt(pred.size());
  parallel_for(gt.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) gt_to_pred[i] = pred_tree.nearest_squared(gt.points[i]);
  });
  parallel_for(pred.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) pred_to_gt[i] = gt_tree.nearest_squared(pred.points[i]);
  });
  double sum_gt = 0.0;
  for (const auto& n : gt_to_pred) sum_gt += n.distance;
  double sum_pred = 0.0;
  for (const auto& n : pred_to_gt) sum_pred += n.distance;
  const double n_gt = static_cast<double>(gt.size());
  const double n_pred = static_cast<double>(pred.size());
  const double loss = sum_gt / n_gt + sum_pred / n_pred;
  if (!grad) return loss;

  Eigen::Matrix3Xd d_pred = Eigen::Matrix3Xd::Zero(3, static_cast<Eigen::Index>(pred.size()));
  for (std::size_t g = 0; g < gt.size(); ++g) {
    const std::size_t j = gt_to_pred[g].index;
    d_pred.col(static_cast<Eigen::Index>(j)) += 2.0 / n_gt * (pred.points[j] - gt.points[g]);
  }
  for (std::size_t m = 0; m < pred.size(); ++m) {
    d_pred.col(static_cast<Eigen::Index>(m)) +=
        2.0 / n_pred * (pred.points[m] - gt.points[pred_to_gt[m].index]);
  }
  MatrixXd d_raw(raw.rows(), raw.cols());
  for (std::size_t i = 0; i < input.size(); ++i) {
    for (int j = 0; j < kappa; ++j) {
      d_raw.block<3, 1>(3 * j, static_cast<Eigen::Index>(i)) =
          d_pred.col(static_cast<Eigen::Index>(i * static_cast<std::size_t>(kappa) + static_cast<std::size_t>(j)));
    }
  }
  d_raw = d_raw.cwiseProduct(config_.max_offset * (1.0 - th.array().square()).matrix());

  grad->setZero(static_cast<Eigen::Index>(layout_.total_size()));
  MatrixXd d_z = std::move(d_raw);
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto [wid, bid] = layers_[l];
    layout_.matrix(*grad, wid).noalias() += d_z * acts[l].transpose();
    layout_.vector(*grad, bid) += d_z.rowwise().sum();
    if (l > 0) {
      const MatrixXd d_h = layout_.matrix(weights_, wid).transpose() * d_z;
      d_z = d_h.cwiseProduct(act::silu_grad(pres[l - 1]));
    }
  }
  return loss;
}

std::vector<RefinePair> make_refine_pairs(std::span<const PointCloud> clean,
                                          const RefineConfig& config) {
  std::vector<RefinePair> pairs;
  pairs.reserve(clean.size());
  std::mt19937_64 seeder(config.seed ^ 0x5EEDULL);
  for (const PointCloud& gt : clean) {
    RefinePair p;
    p.gt = gt;
    p.gt.labels.reset();
    p.input = jitter(p.gt, config.jitter_sigma, seeder());
    pairs.push_back(std::move(p));
  }
  return pairs;
}

RefineHistory train_refine(RefineNet& net, std::span<const RefinePair> dataset,
                           const RefineConfig& config,
                           const std::function<void(int, double)>& on_epoch) {
  config.validate();
  if (dataset.empty()) throw EmptyInputError("refinement dataset is empty");
  std::vector<MatrixXd> features;
  features.reserve(dataset.size());
  for (const auto& p : dataset) features.push_back(net.input_features(p.input));

  auto dataset_loss = [&] {
    double sum = 0.0;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      sum += net.loss_and_gradient(dataset[i].input, features[i], dataset[i].gt, nullptr);
    }
    return sum / static_cast<double>(dataset.size());
  };

  RefineHistory history;
  history.initial_loss = dataset_loss();
  AdamW optimizer(net.layout().total_size(), AdamW::Options{0.9, 0.999, 1e-8, config.weight_decay});
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto batch = static_cast<std::size_t>(config.batch_size);
  VectorXd grad;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += batch) {
      const std::size_t end = std::min(order.size(), begin + batch);
      VectorXd grad_sum = VectorXd::Zero(net.weights().size());
      for (std::size_t k = begin; k < end; ++k) {
        const std::size_t i = order[k];
        epoch_sum += net.loss_and_gradient(dataset[i].input, features[i], dataset[i].gt, &grad);
        grad_sum += grad;
      }
      grad_sum /= static_cast<double>(end - begin);
      VectorXd w = net.weights();
      optimizer.step(w, grad_sum, config.learning_rate);
      net.set_weights(std::move(w));
    }
    const double mean = epoch_sum / static_cast<double>(dataset.size());
    history.epoch_losses.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
  }
  history.final_loss = dataset_loss();
  return history;
}

}  // namespace scenediff
