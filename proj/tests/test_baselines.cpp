// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include <Eigen/Cholesky>

#include "dinecap/baselines.hpp"
#include "dinecap/errors.hpp"

using namespace dinecap;

namespace {

const double kPowers[] = {0.25, 0.5, 1.0, 2.0, 4.0};
const double kAlphas[] = {-0.9, -0.5, -0.1, 0.1, 0.5, 0.9};

// Water-filling by midpoint sums on a uniform grid over [-pi, pi).
double brute_force_water_filling(double power, double alpha, int grid) {
  std::vector<double> s(static_cast<std::size_t>(grid));
  for (int k = 0; k < grid; ++k) {
    const double w = -std::numbers::pi + (k + 0.5) * 2.0 * std::numbers::pi / grid;
    s[static_cast<std::size_t>(k)] = 1.0 + alpha * alpha + 2.0 * alpha * std::cos(w);
  }
  auto allocated = [&](double level) {
    double sum = 0.0;
    for (double v : s) sum += std::max(level - v, 0.0);
    return sum / grid;
  };
  double lo = 0.0;
  double hi = 10.0 + power;
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    (allocated(mid) > power ? hi : lo) = mid;
  }
  const double level = 0.5 * (lo + hi);
  double rate = 0.0;
  for (double v : s) rate += 0.5 * std::log(std::max(level, v) / v);
  return rate / grid;
}

Eigen::MatrixXd toeplitz(const std::vector<double>& r, int n) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const auto lag = static_cast<std::size_t>(std::abs(i - j));
      m(i, j) = lag < r.size() ? r[lag] : 0.0;
    }
  return m;
}

}  // namespace

TEST_CASE("awgn capacity values") {
  CHECK(awgn_capacity(0.0, 1.0) == 0.0);
  CHECK(awgn_capacity(1.0, 1.0) == doctest::Approx(0.346574).epsilon(1e-6));
  CHECK(awgn_capacity(3.0, 1.0) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK(awgn_capacity(2.0, 2.0) == doctest::Approx(0.5 * std::log(2.0)).epsilon(1e-14));
  CHECK_THROWS_AS(awgn_capacity(-1.0, 1.0), ConfigError);
  CHECK_THROWS_AS(awgn_capacity(1.0, 0.0), ConfigError);
}

TEST_CASE("water-filling: flat spectrum and zero power") {
  for (double p : kPowers) CHECK(std::abs(ma1_ff_capacity(p, 0.0).capacity - awgn_capacity(p, 1.0)) < 1e-8);
  CHECK(ma1_ff_capacity(0.0, 0.5).capacity == 0.0);
}

TEST_CASE("water-filling matches a dense-grid brute force") {
  const double simpson = ma1_ff_capacity(1.0, 0.5).capacity;
  const double brute = brute_force_water_filling(1.0, 0.5, 1000000);
  CHECK(std::abs(simpson - brute) < 1e-6);
  // Partial water-filling (dry band) at low power.
  CHECK(std::abs(ma1_ff_capacity(0.25, 0.9).capacity - brute_force_water_filling(0.25, 0.9, 1000000)) < 1e-6);
}

TEST_CASE("water-filling allocates exactly the budget") {
  for (double p : kPowers)
    for (double a : kAlphas) CHECK(ma1_ff_capacity(p, a).power_gap < 1e-9);
}

TEST_CASE("water-filling is invariant to the sign of alpha") {
  for (double p : kPowers)
    for (double a : {0.1, 0.5, 0.9})
      CHECK(std::abs(ma1_ff_capacity(p, a).capacity - ma1_ff_capacity(p, -a).capacity) < 1e-8);
}

TEST_CASE("feedback quartic: memoryless reduction") {
  for (double p : kPowers) {
    const auto s = ma1_fb_capacity(p, 0.0);
    CHECK(std::abs(s.root - 1.0 / std::sqrt(1.0 + p)) < 1e-12);
    CHECK(std::abs(s.capacity - awgn_capacity(p, 1.0)) < 1e-9);
  }
}

TEST_CASE("feedback quartic: root satisfies the equation and is unique") {
  for (double p : kPowers)
    for (double a : kAlphas) {
      const auto s = ma1_fb_capacity(p, a);
      const double x = s.root;
      const double m = 1.0 - std::abs(a) * x;
      CHECK(std::abs(p * x * x - (1.0 - x * x) * m * m) < 1e-12);
      CHECK(x > 0.0);
      CHECK(x < 1.0);
      CHECK(s.sign_changes == 1);
    }
}

TEST_CASE("feedback capacity exceeds feedforward for alpha != 0") {
  CHECK(ma1_fb_capacity(1.0, 0.5).capacity > ma1_ff_capacity(1.0, 0.5).capacity);
  for (double p : kPowers)
    for (double a : kAlphas) CHECK(ma1_fb_capacity(p, a).capacity > ma1_ff_capacity(p, a).capacity);
}

TEST_CASE("feedback capacity vanishes with power") {
  CHECK(ma1_fb_capacity(0.0, 0.5).capacity == 0.0);
  const auto s = ma1_fb_capacity(1e-10, 0.5);
  CHECK(s.capacity < 1e-9);
  CHECK(s.root > 1.0 - 1e-9);
}

TEST_CASE("quartic validation gate passes") {
  const QuarticGate gate = validate_ma1_fb_quartic();
  CHECK(gate.trusted);
  CHECK(gate.awgn_reduction_error < 1e-9);
  CHECK(gate.min_fb_minus_ff > 0.0);
}

TEST_CASE("all baselines are nondecreasing in power") {
  for (double a : kAlphas) {
    double ff = 0.0;
    double fb = 0.0;
    double aw = 0.0;
    for (double p = 0.1; p <= 8.0; p *= 1.5) {
      const double ff_p = ma1_ff_capacity(p, a).capacity;
      const double fb_p = ma1_fb_capacity(p, a).capacity;
      const double aw_p = awgn_capacity(p, 1.0);
      CHECK(ff_p >= ff);
      CHECK(fb_p >= fb);
      CHECK(aw_p >= aw);
      ff = ff_p;
      fb = fb_p;
      aw = aw_p;
    }
  }
}

TEST_CASE("Levinson log-determinant agrees with a Cholesky factorization") {
  const std::vector<std::vector<double>> cases = {
      {1.25, 0.5}, {2.0, 0.9, 0.3, -0.1}, {1.0}, {1.81, 0.9}};
  for (const auto& r : cases)
    for (int n : {1, 2, 7, 64}) {
      const Eigen::LLT<Eigen::MatrixXd> llt(toeplitz(r, n));
      REQUIRE(llt.info() == Eigen::Success);
      const double expected = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
      CHECK(toeplitz_logdet(r, n) == doctest::Approx(expected).epsilon(1e-11));
    }
  CHECK_THROWS_AS(toeplitz_logdet({1.0, 2.0}, 4), NumericError);
  CHECK_THROWS_AS(toeplitz_logdet({0.0}, 4), NumericError);
}

TEST_CASE("Levinson log-determinant stays finite at n = 4096") {
  const double v = toeplitz_logdet({1.25, 0.5}, 4096);
  CHECK(std::isfinite(v));
}

TEST_CASE("Gaussian oracle: memoryless channel is n-independent") {
  for (int n : {1, 5, 64, 1024}) {
    const auto o = gaussian_di_oracle(GaussianInput::iid(2.0), 0.0, n);
    CHECK(std::abs(o.rate_n - awgn_capacity(2.0, 1.0)) < 1e-12);
  }
}

TEST_CASE("Gaussian oracle converges to the spectral integral") {
  const auto o = gaussian_di_oracle(GaussianInput::iid(1.0), 0.5, 1024);
  const double spectral = gaussian_di_spectral(1.0, 0.5);
  CHECK(std::abs(o.rate_n - spectral) < 5e-4);
  CHECK(std::abs(o.rate_2n - spectral) < std::abs(o.rate_n - spectral));
  CHECK(o.rate_n == doctest::Approx(0.378601).epsilon(1e-5));
}

TEST_CASE("Gaussian oracle vanishes without input") {
  CHECK(std::abs(gaussian_di_oracle(GaussianInput::iid(1e-12), 0.5, 256).rate_n) < 1e-11);
}

TEST_CASE("Gaussian oracle with a correlated input") {
  // X_i = V_i + 0.5 V_{i-1}, independent of the noise.
  const GaussianInput in{{1.25, 0.5}};
  const auto o = gaussian_di_oracle(in, 0.5, 512);
  // Output autocovariance (2.5, 1.0) is twice the noise's: rate is (1/2) ln 2.
  CHECK(o.rate_n == doctest::Approx(0.5 * std::log(2.0)).epsilon(1e-12));
}
