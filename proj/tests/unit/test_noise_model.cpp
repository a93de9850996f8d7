#include "oracles.hpp"

#include "scenediff/errors.hpp"
#include "scenediff/noise_model.hpp"
#include "scenediff/schedule.hpp"
#include "scenediff/training.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace scenediff;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.d_t = 8;
  c.d_c = 4;
  c.layer_dims = {6, 5};
  c.n_condition_points = 5;
  return c;
}

/// create() plus a perturbation of every weight so no tensor is zero.
ToyNoisePredictor random_model(const ModelConfig& c, std::uint64_t seed) {
  ToyNoisePredictor m = ToyNoisePredictor::create(c, seed);
  oracle::Gen g(seed + 101);
  Eigen::VectorXd w = m.weights();
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] += 0.3 * g.normal();
  m.set_weights(w);
  return m;
}

TrainingExample random_example(oracle::Gen& g, bool conditional) {
  TrainingExample ex;
  ex.noisy = g.cloud(20, 3.0);
  ex.eps = g.gaussian(20);
  if (conditional) ex.condition = g.cloud(12, 3.0);
  ex.t = g.integer(1, 1000);
  return ex;
}

double max_gradient_error(const ToyNoisePredictor& model, const TrainingExample& ex, double r,
                          std::size_t coords, std::uint64_t seed) {
  Eigen::VectorXd grad;
  model.loss_and_gradient(ex, r, &grad);
  ToyNoisePredictor probe = model;
  auto f = [&](const Eigen::VectorXd& w) {
    probe.set_weights(w);
    return probe.loss_and_gradient(ex, r, nullptr).total;
  };
  oracle::Gen g(seed);
  double worst = 0.0;
  for (std::size_t k = 0; k < coords; ++k) {
    const auto i = static_cast<Eigen::Index>(g.index(0, static_cast<std::size_t>(grad.size()) - 1));
    const double numeric = oracle::central_difference(f, model.weights(), i);
    worst = std::max(worst, oracle::relative_error(grad[i], numeric));
  }
  return worst;
}

}  // namespace

TEST_CASE("temporal embedding follows the sinusoidal formula") {
  const auto tau0 = temporal_embedding(0.0, 6);
  for (int i = 0; i < 3; ++i) {
    CHECK(tau0[2 * i] == 0.0);
    CHECK(tau0[2 * i + 1] == 1.0);
  }
  const auto tau1 = temporal_embedding(1.0, 4);
  CHECK(tau1[0] == doctest::Approx(std::sin(1.0)).epsilon(1e-15));
  CHECK(tau1[1] == doctest::Approx(std::cos(1.0)).epsilon(1e-15));
  CHECK(tau1[2] == doctest::Approx(std::sin(1.0 / 100.0)).epsilon(1e-15));
  CHECK(tau1[3] == doctest::Approx(std::cos(1.0 / 100.0)).epsilon(1e-15));
  oracle::Gen g(4);
  for (int k = 0; k < 50; ++k) {
    const auto tau = temporal_embedding(g.uniform(0, 5000), 96);
    CHECK(tau.cwiseAbs().maxCoeff() <= 1.0);
  }
  CHECK_THROWS_AS(temporal_embedding(1.0, 5), InvalidArgument);
}

TEST_CASE("loss examples") {
  PointVectors eps(3, 2);
  eps << 1, 0, 0, 1, 0, 0;
  CHECK(loss_diff(eps, eps) == 0.0);
  CHECK(loss_diff(eps, PointVectors::Zero(3, 2)) == doctest::Approx(2.0 / 6.0).epsilon(1e-15));
  PointVectors one(3, 1);
  one << 1, 1, 1;
  CHECK(loss_diff(one, PointVectors::Zero(3, 1)) == 1.0);

  PointVectors pm(3, 2);
  pm << -1, 1, -1, 1, -1, 1;
  const RegLoss r0 = loss_reg(pm);
  CHECK(r0.mean == 0.0);
  CHECK(r0.std == 0.0);
  const RegLoss rc = loss_reg(PointVectors::Constant(3, 4, 0.5));
  CHECK(rc.mean == 0.25);
  CHECK(rc.std == 1.0);

  CHECK(loss_total(1.0, 0.25, 1.0, 5.0) == 7.25);
  CHECK(loss_total(0.7, 3.0, 9.0, 0.0) == 0.7);
  CHECK_THROWS_AS(loss_reg(PointVectors(3, 0)), EmptyInputError);
  CHECK(TrainConfig{}.reg_weight == 5.0);
}

TEST_CASE("loss_diff is non-negative and zero only for exact predictions") {
  oracle::Gen g(8);
  for (int k = 0; k < 100; ++k) {
    const auto n = g.index(1, 20);
    const PointVectors a = g.gaussian(n);
    PointVectors b = a;
    CHECK(loss_diff(a, b) == 0.0);
    b(g.index(0, 2), static_cast<Eigen::Index>(g.index(0, n - 1))) += 1e-3;
    CHECK(loss_diff(a, b) > 0.0);
    const RegLoss r = loss_reg(g.gaussian(n));
    CHECK(r.mean >= 0.0);
    CHECK(r.std >= 0.0);
  }
}

TEST_CASE("conditioning block identities") {
  oracle::Gen g(21);
  const Eigen::MatrixXd features = g.gaussian(7).replicate(2, 1);  // 6 x 7
  const Eigen::MatrixXd cond = Eigen::MatrixXd::Random(4, 3);
  std::vector<std::size_t> nearest{0, 1, 2, 0, 1, 2, 0};
  const Eigen::VectorXd tau = temporal_embedding(17.0, 8);

  ConditioningWeights w;
  w.cond_weight = Eigen::MatrixXd::Random(6, 4);
  w.cond_bias = Eigen::VectorXd::Random(6);
  w.time_weight = Eigen::MatrixXd::Random(6, 8);
  w.time_bias = Eigen::VectorXd::Random(6);
  w.proj_weight = Eigen::MatrixXd::Zero(6, 12);
  w.proj_bias = Eigen::VectorXd::Ones(6);
  CHECK(conditioning_block(features, nearest, cond, tau, w) == features);

  w.proj_weight = Eigen::MatrixXd::Random(6, 12);
  CHECK(conditioning_block(Eigen::MatrixXd::Zero(6, 7), nearest, cond, tau, w).isZero(0.0));

  // hand evaluation of one column
  const Eigen::MatrixXd out = conditioning_block(features, nearest, cond, tau, w);
  auto silu = [](const Eigen::VectorXd& z) {
    return Eigen::VectorXd(z.unaryExpr([](double v) { return v / (1.0 + std::exp(-v)); }));
  };
  const Eigen::VectorXd c = silu(w.cond_weight * cond.col(2) + w.cond_bias);
  const Eigen::VectorXd t = silu(w.time_weight * tau + w.time_bias);
  Eigen::VectorXd cat(12);
  cat << c, t;
  const Eigen::VectorXd wp = w.proj_weight * cat + w.proj_bias;
  CHECK((out.col(5) - wp.cwiseProduct(features.col(5))).cwiseAbs().maxCoeff() < 1e-12);

  w.proj_weight = Eigen::MatrixXd::Random(5, 12);
  CHECK_THROWS_AS(conditioning_block(features, nearest, cond, tau, w), SizeError);
}

TEST_CASE("encode_condition contracts") {
  ModelConfig c = small_config();
  oracle::Gen g(5);
  const PointCloud scan = g.cloud(5, 2.0);
  ToyNoisePredictor zero(c, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(
                                ToyNoisePredictor::create(c, 0).layout().total_size())));
  const ConditionSet cs = zero.encode_condition(scan);
  CHECK(cs.features.isZero(0.0));
  CHECK(cs.positions.size() == 5);
  // N' = |scan|: every point is encoded
  std::vector<Point3> got = cs.positions.points;
  std::vector<Point3> want = scan.points;
  auto lex = [](const Point3& a, const Point3& b) {
    return std::lexicographical_compare(a.data(), a.data() + 3, b.data(), b.data() + 3);
  };
  std::sort(got.begin(), got.end(), lex);
  std::sort(want.begin(), want.end(), lex);
  CHECK(got == want);

  const ToyNoisePredictor m = random_model(c, 3);
  CHECK(m.encode_condition(scan).features == m.encode_condition(scan).features);
  CHECK_THROWS_AS(m.encode_condition(g.cloud(4, 1.0)), SizeError);
}

TEST_CASE("prediction shape, determinism and permutation equivariance") {
  const ModelConfig c = small_config();
  const ToyNoisePredictor m = random_model(c, 9);
  oracle::Gen g(10);
  for (int trial = 0; trial < 10; ++trial) {
    const PointCloud noisy = g.cloud(g.index(1, 30), 3.0);
    const PointCloud scan = g.cloud(12, 3.0);
    const int t = g.integer(1, 1000);
    const PointVectors a = m.predict(noisy, std::cref(scan), t);
    REQUIRE(a.cols() == static_cast<Eigen::Index>(noisy.size()));
    CHECK(a.allFinite());
    CHECK(a == m.predict(noisy, std::cref(scan), t));

    std::vector<std::size_t> perm(noisy.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), g.engine());
    const PointVectors b = m.predict(select(noisy, perm), std::cref(scan), t);
    for (std::size_t i = 0; i < perm.size(); ++i) {
      CHECK((b.col(static_cast<Eigen::Index>(i)) - a.col(static_cast<Eigen::Index>(perm[i]))).cwiseAbs().maxCoeff() <
            1e-12);
    }
  }
}

TEST_CASE("zeroed condition MLP makes conditional and null predictions coincide") {
  const ModelConfig c = small_config();
  ToyNoisePredictor m = random_model(c, 12);
  Eigen::VectorXd w = m.weights();
  for (int l = 0; l < c.layer_count(); ++l) {
    const auto& ids = m.layer_ids(l);
    m.layout().matrix(w, ids.cond_w).setZero();
  }
  m.set_weights(w);
  oracle::Gen g(13);
  const PointCloud noisy = g.cloud(15, 2.0);
  const PointCloud scan = g.cloud(10, 2.0);
  CHECK(m.predict(noisy, std::cref(scan), 250) == m.predict(noisy, NullToken{}, 250));
}

TEST_CASE("analytic gradient matches central differences") {
  const ModelConfig c = small_config();
  for (bool conditional : {true, false}) {
    for (double r : {0.0, 5.0}) {
      CAPTURE(conditional);
      CAPTURE(r);
      const ToyNoisePredictor m = random_model(c, conditional ? 31 : 32);
      oracle::Gen g(77);
      const TrainingExample ex = random_example(g, conditional);
      CHECK(max_gradient_error(m, ex, r, 120, 5) < 1e-4);
    }
  }
}

TEST_CASE("every weight group receives a correct gradient") {
  const ModelConfig c = small_config();
  const ToyNoisePredictor m = random_model(c, 41);
  oracle::Gen g(42);
  for (bool conditional : {true, false}) {
    const TrainingExample ex = random_example(g, conditional);
    Eigen::VectorXd grad;
    m.loss_and_gradient(ex, 5.0, &grad);
    ToyNoisePredictor probe = m;
    auto f = [&](const Eigen::VectorXd& w) {
      probe.set_weights(w);
      return probe.loss_and_gradient(ex, 5.0, nullptr).total;
    };
    for (std::size_t id = 0; id < m.layout().entries().size(); ++id) {
      const auto& e = m.layout().entry(id);
      CAPTURE(e.name);
      CAPTURE(conditional);
      for (int k = 0; k < 3; ++k) {
        const auto i = static_cast<Eigen::Index>(e.offset + g.index(0, e.size - 1));
        const double numeric = oracle::central_difference(f, m.weights(), i);
        CHECK(oracle::relative_error(grad[i], numeric) < 1e-4);
      }
    }
  }
}
