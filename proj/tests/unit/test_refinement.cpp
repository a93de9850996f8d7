#include "oracles.hpp"

#include "scenediff/errors.hpp"
#include "scenediff/refinement.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace scenediff;

namespace {

RefineConfig small_refine() {
  RefineConfig c;
  c.kappa = 3;
  c.hidden_dims = {8, 6};
  c.context_k = 4;
  return c;
}

RefineNet random_net(const RefineConfig& c, std::uint64_t seed) {
  RefineNet net = RefineNet::create(c, seed);
  oracle::Gen g(seed + 5);
  Eigen::VectorXd w = net.weights();
  for (Eigen::Index i = 0; i < w.size(); ++i) w[i] += 0.5 * g.normal();
  net.set_weights(w);
  return net;
}

}  // namespace

TEST_CASE("chamfer_sq examples") {
  oracle::Gen g(1);
  const PointCloud a = g.cloud(20, 2.0);
  CHECK(chamfer_sq(a, a) == 0.0);
  PointCloud o(std::vector<Point3>{{0, 0, 0}});
  PointCloud f(std::vector<Point3>{{3, 4, 0}});
  CHECK(chamfer_sq(o, f) == 25.0);
  PointCloud two(std::vector<Point3>{{0, 0, 0}, {1, 0, 0}});
  CHECK(chamfer_sq(two, o) == 0.5);
  CHECK_THROWS_AS(chamfer_sq(PointCloud{}, o), EmptyInputError);
  CHECK_THROWS_AS(chamfer_sq(o, PointCloud{}), EmptyInputError);
}

TEST_CASE("chamfer_sq matches brute force") {
  oracle::Gen g(2);
  for (int trial = 0; trial < 80; ++trial) {
    const bool lattice = g.coin();
    const PointCloud a = lattice ? g.lattice_cloud(g.index(1, 256), 4, 0.5) : g.cloud(g.index(1, 256), 3.0);
    const PointCloud b = lattice ? g.lattice_cloud(g.index(1, 256), 4, 0.5) : g.cloud(g.index(1, 256), 3.0);
    const double c = chamfer_sq(a, b);
    CHECK(c >= 0.0);
    CHECK(c == doctest::Approx(oracle::brute_chamfer_sq(a, b)).epsilon(1e-13));
  }
}

TEST_CASE("refine_loss examples and properties") {
  oracle::Gen g(3);
  const PointCloud a = g.cloud(15, 2.0);
  CHECK(refine_loss(a, a) == 0.0);
  PointCloud o(std::vector<Point3>{{0, 0, 0}});
  PointCloud f(std::vector<Point3>{{3, 4, 0}});
  CHECK(refine_loss(o, f) == 50.0);
  for (int trial = 0; trial < 30; ++trial) {
    const PointCloud x = g.cloud(g.index(1, 40), 2.0);
    const PointCloud y = g.cloud(g.index(1, 40), 2.0);
    CHECK(refine_loss(x, y) == refine_loss(y, x));
    CHECK(refine_loss(x, y) > 0.0);
    // same point set in another order and multiplicity
    PointCloud z = concatenate({x, x});
    std::reverse(z.points.begin(), z.points.end());
    CHECK(refine_loss(x, z) == 0.0);
  }
}

TEST_CASE("refine_upsample") {
  const RefineConfig c = small_refine();
  oracle::Gen g(4);
  const PointCloud cloud = g.cloud(40, 3.0);
  const PointCloud up0 = refine_upsample(cloud, RefineNet::zeros(c));
  REQUIRE(up0.size() == 40 * 3);
  for (std::size_t i = 0; i < 40; ++i)
    for (int j = 0; j < 3; ++j) CHECK(up0.points[i * 3 + static_cast<std::size_t>(j)] == cloud.points[i]);

  RefineConfig six;
  six.hidden_dims = {8};
  CHECK(refine_upsample(g.cloud(100, 5.0), RefineNet::create(six, 1)).size() == 600);

  for (int trial = 0; trial < 10; ++trial) {
    RefineNet net = random_net(c, static_cast<std::uint64_t>(trial));
    Eigen::VectorXd w = net.weights() * 20.0;
    net.set_weights(w);
    const PointCloud in = g.cloud(30, 10.0);
    const Eigen::MatrixXd off = net.offsets(in);
    CHECK(off.rows() == 9);
    CHECK(off.cwiseAbs().maxCoeff() < c.max_offset);
    const PointCloud up = refine_upsample(in, net);
    for (std::size_t i = 0; i < 30; ++i)
      for (int j = 0; j < 3; ++j) {
        const Point3 d = up.points[i * 3 + static_cast<std::size_t>(j)] - in.points[i];
        CHECK((d - off.block(3 * j, static_cast<Eigen::Index>(i), 3, 1)).cwiseAbs().maxCoeff() <= 1e-12);
      }
  }
  CHECK_THROWS_AS(refine_upsample(PointCloud{}, RefineNet::zeros(c)), EmptyInputError);
}

TEST_CASE("zero net loss equals replicated loss") {
  const RefineConfig c = small_refine();
  oracle::Gen g(5);
  const PointCloud gt = g.cloud(50, 2.0);
  const PointCloud in = jitter(gt, 0.05, 3);
  const RefineNet zero = RefineNet::zeros(c);
  CHECK(refine_loss(gt, refine_upsample(in, zero)) == refine_loss(gt, replicate(in, 3)));
  CHECK(zero.loss_and_gradient(in, zero.input_features(in), gt, nullptr) ==
        doctest::Approx(refine_loss(gt, replicate(in, 3))).epsilon(1e-14));
}

TEST_CASE("jitter") {
  oracle::Gen g(6);
  const PointCloud c = g.cloud(10000, 5.0);
  CHECK(jitter(c, 0.0, 1).points == c.points);
  CHECK(jitter(c, 0.05, 1).points == jitter(c, 0.05, 1).points);
  const PointCloud j = jitter(c, 0.05, 1);
  double s2 = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) s2 += (j.points[i] - c.points[i]).squaredNorm();
  CHECK(std::sqrt(s2 / 30000.0) == doctest::Approx(0.05).epsilon(0.1));
  CHECK_THROWS_AS(jitter(c, -0.1, 1), InvalidArgument);
}

TEST_CASE("refine gradient matches finite differences at fixed assignments") {
  const RefineConfig c = small_refine();
  oracle::Gen g(7);
  for (int trial = 0; trial < 3; ++trial) {
    const RefineNet net = random_net(c, 10 + static_cast<std::uint64_t>(trial));
    const PointCloud gt = g.cloud(25, 1.0);
    const PointCloud in = jitter(gt, 0.05, static_cast<std::uint64_t>(trial));
    const Eigen::MatrixXd feats = net.input_features(in);
    Eigen::VectorXd grad;
    const double loss = net.loss_and_gradient(in, feats, gt, &grad);
    const oracle::FrozenAssignment frozen = oracle::freeze_assignment(gt, refine_upsample(in, net));
    CHECK(loss == doctest::Approx(oracle::frozen_refine_loss(gt, refine_upsample(in, net), frozen)).epsilon(1e-12));

    RefineNet probe = net;
    auto f = [&](const Eigen::VectorXd& w) {
      probe.set_weights(w);
      return oracle::frozen_refine_loss(gt, refine_upsample(in, probe), frozen);
    };
    double worst = 0.0;
    for (Eigen::Index i = 0; i < grad.size(); ++i) {
      worst = std::max(worst, oracle::relative_error(grad[i], oracle::central_difference(f, net.weights(), i)));
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("train_refine") {
  RefineConfig c = small_refine();
  c.epochs = 2;
  c.batch_size = 2;
  oracle::Gen g(8);
  std::vector<PointCloud> clean;
  for (int i = 0; i < 4; ++i) clean.push_back(g.cloud(60, 1.0));
  const auto pairs = make_refine_pairs(clean, c);
  REQUIRE(pairs.size() == 4);
  CHECK(pairs[0].gt.points == clean[0].points);
  CHECK(pairs[0].input.size() == 60);

  RefineNet still = RefineNet::create(c, 3);
  const Eigen::VectorXd before = still.weights();
  RefineConfig frozen = c;
  frozen.learning_rate = 0.0;
  frozen.weight_decay = 0.0;
  train_refine(still, pairs, frozen);
  CHECK(still.weights() == before);

  RefineConfig fast = c;
  fast.learning_rate = 1e-3;
  fast.epochs = 5;
  RefineNet net = RefineNet::create(fast, 3);
  int calls = 0;
  const RefineHistory h = train_refine(net, pairs, fast, [&](int, double) { ++calls; });
  CHECK(calls == 5);
  CHECK(h.epoch_losses.size() == 5);
  CHECK(h.final_loss < h.initial_loss);

  CHECK_THROWS_AS(train_refine(net, std::span<const RefinePair>{}, c), EmptyInputError);
}

TEST_CASE("refine config validation") {
  RefineConfig c;
  c.kappa = 0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = RefineConfig{};
  c.max_offset = 0.0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = RefineConfig{};
  CHECK_NOTHROW(c.validate());
}
