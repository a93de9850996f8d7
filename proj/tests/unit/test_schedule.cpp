#include "oracles.hpp"

#include "scenediff/errors.hpp"
#include "scenediff/schedule.hpp"

#include <doctest.h>

#include <cmath>

using namespace scenediff;

TEST_CASE("linear schedule endpoints and product") {
  const NoiseSchedule s = NoiseSchedule::linear(1000, 3.5e-5, 0.007);
  CHECK(s.steps() == 1000);
  CHECK(s.beta(1) == 3.5e-5);
  CHECK(s.beta(1000) == doctest::Approx(0.007).epsilon(1e-15));
  CHECK(std::abs(s.alpha_bar(1000) - 0.0295) < 1e-3);
  CHECK(s.alpha_bar(1000) > 0.02);
  CHECK(s.alpha_bar(1000) < 0.04);
  CHECK(s.alpha_bar(0) == 1.0);

  // independent log-space product
  for (int t : {1, 2, 17, 250, 500, 999, 1000}) {
    CHECK(s.alpha_bar(t) == doctest::Approx(oracle::log_sum_alpha_bar(t, 1000, 3.5e-5, 0.007)).epsilon(1e-12));
  }

  const NoiseSchedule two = NoiseSchedule::linear(2, 0.5, 0.5);
  CHECK(two.alpha_bar(1) == 0.5);
  CHECK(two.alpha_bar(2) == 0.25);
}

TEST_CASE("schedule arrays are consistent") {
  const NoiseSchedule s = NoiseSchedule::reference();
  for (int t = 1; t <= s.steps(); ++t) {
    CHECK(s.beta(t) > 0.0);
    CHECK(s.beta(t) < 1.0);
    CHECK(s.alpha(t) == 1.0 - s.beta(t));
    CHECK(s.alpha_bar(t) == s.alpha_bar(t - 1) * s.alpha(t));
    if (t > 1) {
      CHECK(s.beta(t) >= s.beta(t - 1));
      CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
    }
  }
}

TEST_CASE("schedule parameter errors") {
  CHECK_THROWS_AS(NoiseSchedule::linear(1, 0.1, 0.2), InvalidArgument);
  CHECK_THROWS_AS(NoiseSchedule::linear(10, 0.0, 0.2), InvalidArgument);
  CHECK_THROWS_AS(NoiseSchedule::linear(10, 0.3, 0.2), InvalidArgument);
  CHECK_THROWS_AS(NoiseSchedule::linear(10, 0.1, 1.0), InvalidArgument);
  const NoiseSchedule s = NoiseSchedule::reference();
  CHECK_THROWS_AS(s.beta(0), InvalidArgument);
  CHECK_THROWS_AS(s.beta(1001), InvalidArgument);
  CHECK_THROWS_AS(noise_scale(1001, s), InvalidArgument);
  CHECK_THROWS_AS(noise_scale(-1, s), InvalidArgument);
}

TEST_CASE("noise_scale") {
  const NoiseSchedule s = NoiseSchedule::reference();
  CHECK(noise_scale(1, s) == doctest::Approx(std::sqrt(3.5e-5)).epsilon(1e-12));
  CHECK(noise_scale(1, s) == doctest::Approx(5.916e-3).epsilon(1e-3));
  CHECK(noise_scale(1000, s) == doctest::Approx(0.98513).epsilon(5e-4));
  for (int t = 1; t < 1000; ++t) CHECK(noise_scale(t + 1, s) > noise_scale(t, s));
}

TEST_CASE("forward_noise_global examples") {
  const NoiseSchedule two = NoiseSchedule::linear(2, 0.5, 0.5);  // abar_2 = 0.25
  PointCloud x0(std::vector<Point3>{{4, 0, 0}});
  PointVectors eps(3, 1);
  eps.col(0) = Point3(2, 0, 0);
  const Point3 got = forward_noise_global(x0, 2, eps, two).points[0];
  CHECK(got.x() == doctest::Approx(2.0 + 1.7320508075688772).epsilon(1e-15));
  CHECK(got.y() == 0.0);

  const NoiseSchedule s = NoiseSchedule::reference();
  oracle::Gen g(1);
  const PointCloud c = g.cloud(20, 5.0);
  const PointVectors e = g.gaussian(20);
  const PointCloud far = forward_noise_global(c, 1000, e, s);
  for (std::size_t i = 0; i < c.size(); ++i) {
    const Point3 pure = s.noise_scale(1000) * e.col(static_cast<Eigen::Index>(i));
    CHECK((far.points[i] - pure).norm() <= std::sqrt(s.alpha_bar(1000)) * c.points[i].norm() + 1e-12);
  }
  CHECK_THROWS_AS(forward_noise_global(c, 1, g.gaussian(3), s), SizeError);
}

TEST_CASE("forward_noise_local examples") {
  const NoiseSchedule s = NoiseSchedule::reference();
  oracle::Gen g(2);
  const PointCloud c = g.cloud(10, 5.0);
  const PointCloud same = forward_noise_local(c, 700, PointVectors::Zero(3, 10), s);
  CHECK(same.points == c.points);

  // abar = 0.75 -> scale 0.5
  const NoiseSchedule half = NoiseSchedule::linear(2, 0.25, 0.25);
  CHECK(half.noise_scale(1) == 0.5);
  PointCloud p(std::vector<Point3>{{1, 2, 3}});
  PointVectors e(3, 1);
  e.col(0) = Point3(1, 0, -1);
  const Point3 r = forward_noise_local(p, 1, e, half).points[0];
  CHECK(r == Point3(1.5, 2, 2.5));

  PointCloud origin(std::vector<Point3>{{0, 0, 0}});
  e.col(0) = Point3(1, 0, 0);
  CHECK(forward_noise_local(origin, 1000, e, s).points[0].x() == doctest::Approx(0.98513).epsilon(5e-4));
  CHECK_THROWS_AS(forward_noise_local(c, 1, g.gaussian(4), s), SizeError);
  CHECK_THROWS_AS(forward_noise_local(c, 0, g.gaussian(10), s), InvalidArgument);
}

TEST_CASE("local offset is exactly scale times noise; global at zero reduces to it") {
  const NoiseSchedule s = NoiseSchedule::reference();
  oracle::Gen g(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = g.index(1, 30);
    const int t = g.integer(1, 1000);
    const PointCloud c = g.cloud(n, 50.0);
    const PointVectors e = g.gaussian(n);
    const PointCloud loc = forward_noise_local(c, t, e, s);
    PointCloud zero(std::vector<Point3>(n, Point3::Zero()));
    const PointCloud glob = forward_noise_global(zero, t, e, s);
    for (std::size_t i = 0; i < n; ++i) {
      const Point3 expect = noise_scale(t, s) * e.col(static_cast<Eigen::Index>(i));
      CHECK(((loc.points[i] - c.points[i]) - expect).cwiseAbs().maxCoeff() <= 1e-12);
      CHECK((glob.points[i] - expect).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}
