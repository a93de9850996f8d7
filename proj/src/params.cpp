#include "scenediff/params.hpp"

#include "scenediff/errors.hpp"

#include <cmath>
#include <random>

namespace scenediff {

std::size_t ParamLayout::add_matrix(std::string name, Eigen::Index rows, Eigen::Index cols) {
  Entry e;
  e.name = std::move(name);
  e.dims = {static_cast<std::uint32_t>(rows), static_cast<std::uint32_t>(cols)};
  e.offset = total_;
  e.size = static_cast<std::size_t>(rows * cols);
  total_ += e.size;
  entries_.push_back(std::move(e));
  return entries_.size() - 1;
}

std::size_t ParamLayout::add_vector(std::string name, Eigen::Index n) {
  Entry e;
  e.name = std::move(name);
  e.dims = {static_cast<std::uint32_t>(n)};
  e.offset = total_;
  e.size = static_cast<std::size_t>(n);
  total_ += e.size;
  entries_.push_back(std::move(e));
  return entries_.size() - 1;
}

Eigen::Map<const Eigen::MatrixXd> ParamLayout::matrix(const Eigen::VectorXd& flat,
                                                      std::size_t id) const {
  const Entry& e = entries_.at(id);
  return {flat.data() + e.offset, e.dims.at(0), e.dims.size() > 1 ? e.dims[1] : 1};
}

Eigen::Map<Eigen::MatrixXd> ParamLayout::matrix(Eigen::VectorXd& flat, std::size_t id) const {
  const Entry& e = entries_.at(id);
  return {flat.data() + e.offset, e.dims.at(0), e.dims.size() > 1 ? e.dims[1] : 1};
}

Eigen::Map<const Eigen::VectorXd> ParamLayout::vector(const Eigen::VectorXd& flat,
                                                      std::size_t id) const {
  const Entry& e = entries_.at(id);
  return {flat.data() + e.offset, static_cast<Eigen::Index>(e.size)};
}

Eigen::Map<Eigen::VectorXd> ParamLayout::vector(Eigen::VectorXd& flat, std::size_t id) const {
  const Entry& e = entries_.at(id);
  return {flat.data() + e.offset, static_cast<Eigen::Index>(e.size)};
}

const ParamLayout::Entry& ParamLayout::owner(std::size_t flat_index) const {
  for (const auto& e : entries_) {
    if (flat_index >= e.offset && flat_index < e.offset + e.size) return e;
  }
  throw InvalidArgument("parameter index out of range");
}

AdamW::AdamW(std::size_t n, Options options)
    : options_(options),
      m_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))),
      v_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))) {}

void AdamW::step(Eigen::VectorXd& weights, const Eigen::VectorXd& grad, double learning_rate) {
  if (grad.size() != m_.size() || weights.size() != m_.size()) {
    throw SizeError("optimizer state does not match the parameter vector");
  }
  ++t_;
  m_ = options_.beta1 * m_ + (1.0 - options_.beta1) * grad;
  v_ = options_.beta2 * v_ + (1.0 - options_.beta2) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  const Eigen::ArrayXd m_hat = m_.array() / bc1;
  const Eigen::ArrayXd v_hat = v_.array() / bc2;
  weights.array() -= learning_rate * (m_hat / (v_hat.sqrt() + options_.epsilon) +
                                      options_.weight_decay * weights.array());
}

void init_dense(Eigen::Map<Eigen::MatrixXd> weight, Eigen::Map<Eigen::VectorXd> bias,
                std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(weight.cols())));
  for (Eigen::Index j = 0; j < weight.cols(); ++j) {
    for (Eigen::Index i = 0; i < weight.rows(); ++i) weight(i, j) = normal(rng);
  }
  bias.setZero();
}

}  // namespace scenediff
