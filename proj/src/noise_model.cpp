#include "scenediff/noise_model.hpp"

#include "scenediff/errors.hpp"
#include "scenediff/spatial_index.hpp"

#include <cmath>
#include <random>
#include <string>

namespace scenediff {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void ModelConfig::validate() const {
  if (d_t < 2 || d_t % 2 != 0) throw InvalidArgument("temporal embedding size must be even");
  if (d_c < 1) throw InvalidArgument("condition embedding size must be >= 1");
  if (n_condition_points < 1) throw InvalidArgument("condition point count must be >= 1");
  for (int d : layer_dims) {
    if (d < 1) throw InvalidArgument("layer widths must be >= 1");
  }
  if (!(input_scale > 0.0) || !std::isfinite(input_scale)) {
    throw InvalidArgument("input scale must be positive");
  }
  if (activation != Activation::SiLU) throw InvalidArgument("unsupported activation");
}

int ModelConfig::in_dim(int layer) const {
  return layer == 0 ? 3 : layer_dims.at(static_cast<std::size_t>(layer - 1));
}

int ModelConfig::out_dim(int layer) const {
  return layer + 1 == layer_count() ? 3 : layer_dims.at(static_cast<std::size_t>(layer));
}

VectorXd temporal_embedding(double t, int d_t) {
  if (d_t < 2 || d_t % 2 != 0) throw InvalidArgument("temporal embedding size must be even");
  VectorXd tau(d_t);
  for (int i = 0; i < d_t / 2; ++i) {
    const double freq = std::pow(10000.0, 2.0 * i / static_cast<double>(d_t));
    tau[2 * i] = std::sin(t / freq);
    tau[2 * i + 1] = std::cos(t / freq);
  }
  return tau;
}

namespace {

using CMatRef = Eigen::Ref<const MatrixXd>;
using CVecRef = Eigen::Ref<const VectorXd>;

struct BlockWeights {
  CMatRef cond_w;
  CVecRef cond_b;
  CMatRef time_w;
  CVecRef time_b;
  CMatRef proj_w;
  CVecRef proj_b;
};

struct BlockCache {
  MatrixXd zc;      // d x Nc
  MatrixXd cn;      // d x Nc
  VectorXd zt;      // d
  VectorXd tau_l;   // d
  MatrixXd w_prime; // d x M
};

void block_forward(const BlockWeights& w, const MatrixXd& features,
                   std::span<const std::size_t> nearest, const MatrixXd& cond_features,
                   const VectorXd& tau, BlockCache& c, MatrixXd& conditioned) {
  const Eigen::Index d = features.rows();
  if (w.cond_w.rows() != d || w.cond_w.cols() != cond_features.rows() ||
      w.time_w.cols() != tau.size() || w.proj_w.rows() != d || w.proj_w.cols() != 2 * d ||
      static_cast<std::size_t>(features.cols()) != nearest.size()) {
    throw SizeError("conditioning block shapes do not agree");
  }
  c.zc = (w.cond_w * cond_features).colwise() + VectorXd(w.cond_b);
  c.cn = act::silu(c.zc);
  c.zt = w.time_w * tau + w.time_b;
  c.tau_l = act::silu(c.zt);
  const MatrixXd per_condition = w.proj_w.leftCols(d) * c.cn;
  const VectorXd shared = w.proj_w.rightCols(d) * c.tau_l + w.proj_b;
  c.w_prime.resize(d, features.cols());
  for (Eigen::Index i = 0; i < features.cols(); ++i) {
    const auto j = static_cast<Eigen::Index>(nearest[static_cast<std::size_t>(i)]);
    if (j >= per_condition.cols()) throw SizeError("condition index out of range");
    c.w_prime.col(i) = per_condition.col(j) + shared;
  }
  conditioned = c.w_prime.cwiseProduct(features);
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

MatrixXd conditioning_block(const MatrixXd& features, std::span<const std::size_t> nearest,
                            const MatrixXd& condition_features, const VectorXd& tau,
                            const ConditioningWeights& w) {
  BlockCache cache;
  MatrixXd out;
  block_forward({w.cond_weight, w.cond_bias, w.time_weight, w.time_bias, w.proj_weight,
                 w.proj_bias},
                features, nearest, condition_features, tau, cache, out);
  return out;
}

double loss_diff(const PointVectors& eps_true, const PointVectors& eps_pred) {
  if (eps_true.cols() != eps_pred.cols()) throw SizeError("loss operands differ in length");
  if (eps_true.size() == 0) throw EmptyInputError("loss over zero points");
  return (eps_true - eps_pred).squaredNorm() / static_cast<double>(eps_true.size());
}

RegLoss loss_reg(const PointVectors& eps_pred) {
  if (eps_pred.size() == 0) throw EmptyInputError("regularization over zero values");
  const auto n = static_cast<double>(eps_pred.size());
  const double mean = eps_pred.sum() / n;
  const double stddev = std::sqrt((eps_pred.array() - mean).square().sum() / n);
  return {mean * mean, (stddev - 1.0) * (stddev - 1.0)};
}

double loss_total(double l_diff, double l_mean, double l_std, double r) {
  return l_diff + r * (l_mean + l_std);
}

// ---------------------------------------------------------------------------

struct ToyNoisePredictor::Forward {
  struct Layer {
    MatrixXd features;  // F_l
    BlockCache block;
    MatrixXd input;     // [F'_l ; x]
    MatrixXd pre;       // pre-activation of the layer output
  };
  MatrixXd x;  // scaled coordinates, 3 x M
  VectorXd tau;
  std::vector<Layer> layers;
  MatrixXd out;
};

ToyNoisePredictor::ToyNoisePredictor(ModelConfig config, VectorXd weights)
    : config_(std::move(config)) {
  config_.validate();
  build_layout();
  if (static_cast<std::size_t>(weights.size()) != layout_.total_size()) {
    throw SizeError("weight vector has " + std::to_string(weights.size()) + " entries, model needs " +
                    std::to_string(layout_.total_size()));
  }
  if (!weights.allFinite()) throw InvalidArgument("model weights must be finite");
  weights_ = std::move(weights);
}

ToyNoisePredictor::ToyNoisePredictor(const ToyNoisePredictor& other)
    : NoisePredictor(),
      config_(other.config_),
      layout_(other.layout_),
      weights_(other.weights_),
      encoder_w_(other.encoder_w_),
      encoder_b_(other.encoder_b_),
      null_token_(other.null_token_),
      layers_(other.layers_) {}

ToyNoisePredictor& ToyNoisePredictor::operator=(const ToyNoisePredictor& other) {
  if (this == &other) return *this;
  config_ = other.config_;
  layout_ = other.layout_;
  weights_ = other.weights_;
  encoder_w_ = other.encoder_w_;
  encoder_b_ = other.encoder_b_;
  null_token_ = other.null_token_;
  layers_ = other.layers_;
  std::lock_guard<std::mutex> lock(cache_mutex_);
  cached_points_.reset();
  cached_condition_.reset();
  return *this;
}

void ToyNoisePredictor::build_layout() {
  layout_ = ParamLayout{};
  layers_.clear();
  encoder_w_ = layout_.add_matrix("encoder.weight", config_.d_c, 3);
  encoder_b_ = layout_.add_vector("encoder.bias", config_.d_c);
  null_token_ = layout_.add_vector("null_token", config_.d_c);
  for (int l = 0; l < config_.layer_count(); ++l) {
    const int d = config_.in_dim(l);
    const std::string p = "block" + std::to_string(l);
    const std::string q = "layer" + std::to_string(l);
    LayerIds ids{};
    ids.cond_w = layout_.add_matrix(p + ".cond.weight", d, config_.d_c);
    ids.cond_b = layout_.add_vector(p + ".cond.bias", d);
    ids.time_w = layout_.add_matrix(p + ".time.weight", d, config_.d_t);
    ids.time_b = layout_.add_vector(p + ".time.bias", d);
    ids.proj_w = layout_.add_matrix(p + ".proj.weight", d, 2 * d);
    ids.proj_b = layout_.add_vector(p + ".proj.bias", d);
    ids.layer_w = layout_.add_matrix(q + ".weight", config_.out_dim(l), d + 3);
    ids.layer_b = layout_.add_vector(q + ".bias", config_.out_dim(l));
    layers_.push_back(ids);
  }
}

ToyNoisePredictor ToyNoisePredictor::create(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ToyNoisePredictor model(config, ZeroInit{});
  VectorXd w = model.weights_;
  std::uint64_t stream = splitmix(seed);
  auto next_seed = [&stream] { return stream = splitmix(stream); };

  const ParamLayout& L = model.layout_;
  init_dense(L.matrix(w, model.encoder_w_), L.vector(w, model.encoder_b_), next_seed());
  {
    std::mt19937_64 rng(next_seed());
    std::normal_distribution<double> normal(0.0, 1.0);
    auto null_token = L.vector(w, model.null_token_);
    for (Eigen::Index i = 0; i < null_token.size(); ++i) null_token[i] = normal(rng);
  }
  for (const LayerIds& ids : model.layers_) {
    init_dense(L.matrix(w, ids.cond_w), L.vector(w, ids.cond_b), next_seed());
    init_dense(L.matrix(w, ids.time_w), L.vector(w, ids.time_b), next_seed());
    init_dense(L.matrix(w, ids.proj_w), L.vector(w, ids.proj_b), next_seed());
    // start close to the identity modulation W' = 1
    L.matrix(w, ids.proj_w) *= 0.1;
    L.vector(w, ids.proj_b).setOnes();
    // condition columns start at zero so conditional and null predictions agree
    auto proj = L.matrix(w, ids.proj_w);
    proj.leftCols(proj.cols() / 2).setZero();
    init_dense(L.matrix(w, ids.layer_w), L.vector(w, ids.layer_b), next_seed());
  }
  model.set_weights(std::move(w));
  return model;
}

ToyNoisePredictor::ToyNoisePredictor(ModelConfig config, ZeroInit) : config_(std::move(config)) {
  config_.validate();
  build_layout();
  weights_ = VectorXd::Zero(static_cast<Eigen::Index>(layout_.total_size()));
}

void ToyNoisePredictor::set_weights(VectorXd weights) {
  if (static_cast<std::size_t>(weights.size()) != layout_.total_size()) {
    throw SizeError("weight vector size does not match the model layout");
  }
  if (!weights.allFinite()) throw InvalidArgument("model weights must be finite");
  weights_ = std::move(weights);
  std::lock_guard<std::mutex> lock(cache_mutex_);
  cached_points_.reset();
  cached_condition_.reset();
}

ConditioningWeights ToyNoisePredictor::conditioning_weights(int layer) const {
  const LayerIds& ids = layer_ids(layer);
  return {layout_.matrix(weights_, ids.cond_w), layout_.vector(weights_, ids.cond_b),
          layout_.matrix(weights_, ids.time_w), layout_.vector(weights_, ids.time_b),
          layout_.matrix(weights_, ids.proj_w), layout_.vector(weights_, ids.proj_b)};
}

ConditionSet ToyNoisePredictor::encode_condition(const PointCloud& scan) const {
  const auto n_prime = static_cast<std::size_t>(config_.n_condition_points);
  if (scan.size() < n_prime) {
    throw SizeError("condition scan has " + std::to_string(scan.size()) +
                    " points, the encoder needs at least " + std::to_string(n_prime));
  }
  ConditionSet c;
  c.positions = fps(scan, n_prime, config_.fps_seed);
  c.positions.labels.reset();
  const MatrixXd scaled = c.positions.matrix() * config_.input_scale;
  c.pre_features = (layout_.matrix(weights_, encoder_w_) * scaled).colwise() +
                   VectorXd(layout_.vector(weights_, encoder_b_));
  c.features = act::silu(c.pre_features);
  return c;
}

MatrixXd ToyNoisePredictor::null_features() const {
  return MatrixXd(layout_.vector(weights_, null_token_));
}

std::vector<std::size_t> ToyNoisePredictor::nearest_condition(const PointCloud& noisy,
                                                              const ConditionSet* condition) const {
  std::vector<std::size_t> nearest(noisy.size(), 0);
  if (condition) {
    const KdTree tree(condition->positions.points);
    for (std::size_t i = 0; i < noisy.size(); ++i) nearest[i] = tree.nearest(noisy.points[i]).index;
  }
  return nearest;
}

void ToyNoisePredictor::forward(const PointCloud& noisy, const MatrixXd& cond_features,
                                std::span<const std::size_t> nearest, int t, Forward& fwd) const {
  fwd.x = noisy.matrix() * config_.input_scale;
  fwd.tau = temporal_embedding(static_cast<double>(t), config_.d_t);
  fwd.layers.assign(static_cast<std::size_t>(config_.layer_count()), {});
  MatrixXd features = fwd.x;
  const Eigen::Index m = fwd.x.cols();
  for (int l = 0; l < config_.layer_count(); ++l) {
    const LayerIds& ids = layers_[static_cast<std::size_t>(l)];
    auto& layer = fwd.layers[static_cast<std::size_t>(l)];
    layer.features = std::move(features);
    const BlockWeights bw{layout_.matrix(weights_, ids.cond_w), layout_.vector(weights_, ids.cond_b),
                          layout_.matrix(weights_, ids.time_w), layout_.vector(weights_, ids.time_b),
                          layout_.matrix(weights_, ids.proj_w), layout_.vector(weights_, ids.proj_b)};
    MatrixXd conditioned;
    block_forward(bw, layer.features, nearest, cond_features, fwd.tau, layer.block, conditioned);
    const Eigen::Index d = layer.features.rows();
    layer.input.resize(d + 3, m);
    layer.input.topRows(d) = conditioned;
    layer.input.bottomRows(3) = fwd.x;
    layer.pre = (layout_.matrix(weights_, ids.layer_w) * layer.input).colwise() +
                VectorXd(layout_.vector(weights_, ids.layer_b));
    if (l + 1 < config_.layer_count()) {
      features = act::silu(layer.pre);
    }
  }
  fwd.out = fwd.layers.back().pre;
}

PointVectors ToyNoisePredictor::predict_encoded(const PointCloud& noisy,
                                                const ConditionSet* condition, int t) const {
  if (noisy.empty()) return PointVectors(3, 0);
  const auto nearest = nearest_condition(noisy, condition);
  Forward fwd;
  forward(noisy, condition ? condition->features : null_features(), nearest, t, fwd);
  return fwd.out;
}

PointVectors ToyNoisePredictor::predict(const PointCloud& noisy, const Condition& condition,
                                        int t) const {
  if (is_null(condition)) return predict_encoded(noisy, nullptr, t);
  const PointCloud& scan = std::get<std::reference_wrapper<const PointCloud>>(condition).get();
  std::optional<ConditionSet> encoded;
  {
    std::lock_guard<std::mutex> lock(cache_mutex_);
    if (cached_points_ && *cached_points_ == scan.points) encoded = cached_condition_;
  }
  if (!encoded) {
    encoded = encode_condition(scan);
    std::lock_guard<std::mutex> lock(cache_mutex_);
    cached_points_ = scan.points;
    cached_condition_ = encoded;
  }
  return predict_encoded(noisy, &*encoded, t);
}

LossBreakdown ToyNoisePredictor::loss_and_gradient(const TrainingExample& example,
                                                   double reg_weight, VectorXd* grad) const {
  if (static_cast<std::size_t>(example.eps.cols()) != example.noisy.size()) {
    throw SizeError("training noise does not match the noisy cloud");
  }
  if (example.noisy.empty()) throw EmptyInputError("training example has no points");

  std::optional<ConditionSet> condition;
  if (example.condition) condition = encode_condition(*example.condition);
  const ConditionSet* cond_ptr = condition ? &*condition : nullptr;
  const MatrixXd cond_features = cond_ptr ? cond_ptr->features : null_features();
  const auto nearest = nearest_condition(example.noisy, cond_ptr);

  Forward fwd;
  forward(example.noisy, cond_features, nearest, example.t, fwd);

  LossBreakdown lb;
  lb.t = example.t;
  lb.null_token = !example.condition.has_value();
  lb.diff = loss_diff(example.eps, fwd.out);
  const RegLoss reg = loss_reg(fwd.out);
  lb.mean = reg.mean;
  lb.std = reg.std;
  lb.total = loss_total(lb.diff, lb.mean, lb.std, reg_weight);
  if (!grad) return lb;

  // dL/dout
  const auto n = static_cast<double>(fwd.out.size());
  const double mean = fwd.out.sum() / n;
  const double stddev = std::sqrt((fwd.out.array() - mean).square().sum() / n);
  MatrixXd d_out = 2.0 / n * (fwd.out - example.eps);
  d_out.array() += reg_weight * 2.0 * mean / n;
  if (stddev > 0.0) {
    d_out.array() += reg_weight * 2.0 * (stddev - 1.0) / (n * stddev) * (fwd.out.array() - mean);
  }

  grad->setZero(static_cast<Eigen::Index>(layout_.total_size()));
  MatrixXd d_cond_features = MatrixXd::Zero(cond_features.rows(), cond_features.cols());
  MatrixXd d_pre = std::move(d_out);
  for (int l = config_.layer_count() - 1; l >= 0; --l) {
    const LayerIds& ids = layers_[static_cast<std::size_t>(l)];
    const auto& layer = fwd.layers[static_cast<std::size_t>(l)];
    const Eigen::Index d = layer.features.rows();

    layout_.matrix(*grad, ids.layer_w).noalias() += d_pre * layer.input.transpose();
    layout_.vector(*grad, ids.layer_b) += d_pre.rowwise().sum();
    const MatrixXd d_input = layout_.matrix(weights_, ids.layer_w).transpose() * d_pre;
    const MatrixXd d_conditioned = d_input.topRows(d);

    // F' = W' (.) F
    const MatrixXd d_wprime = d_conditioned.cwiseProduct(layer.features);
    const MatrixXd d_features = d_conditioned.cwiseProduct(layer.block.w_prime);

    // W'_i = Pc[:, nearest_i] + proj_t * tau_l + proj_b
    const VectorXd d_shared = d_wprime.rowwise().sum();
    MatrixXd d_per_condition = MatrixXd::Zero(d, layer.block.cn.cols());
    for (Eigen::Index i = 0; i < d_wprime.cols(); ++i) {
      d_per_condition.col(static_cast<Eigen::Index>(nearest[static_cast<std::size_t>(i)])) +=
          d_wprime.col(i);
    }
    auto g_proj = layout_.matrix(*grad, ids.proj_w);
    const auto proj = layout_.matrix(weights_, ids.proj_w);
    g_proj.leftCols(d).noalias() += d_per_condition * layer.block.cn.transpose();
    g_proj.rightCols(d).noalias() += d_shared * layer.block.tau_l.transpose();
    layout_.vector(*grad, ids.proj_b) += d_shared;

    const VectorXd d_zt =
        (proj.rightCols(d).transpose() * d_shared).cwiseProduct(VectorXd(act::silu_grad(layer.block.zt)));
    layout_.matrix(*grad, ids.time_w).noalias() += d_zt * fwd.tau.transpose();
    layout_.vector(*grad, ids.time_b) += d_zt;

    const MatrixXd d_zc =
        (proj.leftCols(d).transpose() * d_per_condition).cwiseProduct(act::silu_grad(layer.block.zc));
    layout_.matrix(*grad, ids.cond_w).noalias() += d_zc * cond_features.transpose();
    layout_.vector(*grad, ids.cond_b) += d_zc.rowwise().sum();
    d_cond_features.noalias() += layout_.matrix(weights_, ids.cond_w).transpose() * d_zc;

    if (l > 0) {
      const auto& prev = fwd.layers[static_cast<std::size_t>(l - 1)];
      d_pre = d_features.cwiseProduct(act::silu_grad(prev.pre));
    }
  }

  if (cond_ptr) {
    const MatrixXd d_pre_features = d_cond_features.cwiseProduct(act::silu_grad(cond_ptr->pre_features));
    const MatrixXd scaled = cond_ptr->positions.matrix() * config_.input_scale;
    layout_.matrix(*grad, encoder_w_).noalias() += d_pre_features * scaled.transpose();
    layout_.vector(*grad, encoder_b_) += d_pre_features.rowwise().sum();
  } else {
    layout_.vector(*grad, null_token_) += d_cond_features.col(0);
  }
  return lb;
}

}  // namespace scenediff
