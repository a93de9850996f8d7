#pragma once

#include <Eigen/Core>

#include <cmath>

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace scenediff {

/// Named tensors laid out back to back in one flat parameter vector, in
/// declaration order. Matrices are stored column-major in memory.
class ParamLayout {
 public:
  struct Entry {
    std::string name;
    std::vector<std::uint32_t> dims;  // rank 1: {n}; rank 2: {rows, cols}
    std::size_t offset = 0;
    std::size_t size = 0;
  };

  std::size_t add_matrix(std::string name, Eigen::Index rows, Eigen::Index cols);
  std::size_t add_vector(std::string name, Eigen::Index n);

  const std::vector<Entry>& entries() const noexcept { return entries_; }
  const Entry& entry(std::size_t id) const { return entries_.at(id); }
  std::size_t total_size() const noexcept { return total_; }

  Eigen::Map<const Eigen::MatrixXd> matrix(const Eigen::VectorXd& flat, std::size_t id) const;
  Eigen::Map<Eigen::MatrixXd> matrix(Eigen::VectorXd& flat, std::size_t id) const;
  Eigen::Map<const Eigen::VectorXd> vector(const Eigen::VectorXd& flat, std::size_t id) const;
  Eigen::Map<Eigen::VectorXd> vector(Eigen::VectorXd& flat, std::size_t id) const;

  /// Entry that owns a flat coordinate.
  const Entry& owner(std::size_t flat_index) const;

 private:
  std::vector<Entry> entries_;
  std::size_t total_ = 0;
};

/// Adam with decoupled weight decay.
class AdamW {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 1e-4;
  };

  explicit AdamW(std::size_t n, Options options);

  void step(Eigen::VectorXd& weights, const Eigen::VectorXd& grad, double learning_rate);
  long iterations() const noexcept { return t_; }

 private:
  Options options_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  long t_ = 0;
};

namespace act {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// SiLU z * sigmoid(z), applied elementwise.
inline Eigen::MatrixXd silu(const Eigen::MatrixXd& z) {
  return z.unaryExpr([](double v) { return v * sigmoid(v); });
}

inline Eigen::MatrixXd silu_grad(const Eigen::MatrixXd& z) {
  return z.unaryExpr([](double v) {
    const double s = sigmoid(v);
    return s * (1.0 + v * (1.0 - s));
  });
}

}  // namespace act

/// Fills weights with N(0, 1/fan_in) and biases with zero, using `seed`.
void init_dense(Eigen::Map<Eigen::MatrixXd> weight, Eigen::Map<Eigen::VectorXd> bias,
                std::uint64_t seed);

}  // namespace scenediff
