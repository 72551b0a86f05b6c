// SPDX-License-Identifier: Apache-2.0
#include "dinecap/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>

#include "dinecap/errors.hpp"

namespace dinecap {
namespace {

constexpr double kPi = std::numbers::pi;

// Composite Simpson on [a, b] with an even number of panels.
double simpson(const std::function<double(double)>& f, double a, double b, int panels) {
  if (b <= a) return 0.0;
  panels = std::max(2, panels + (panels % 2));
  const double h = (b - a) / panels;
  double sum = f(a) + f(b);
  for (int k = 1; k < panels; ++k) sum += f(a + k * h) * ((k % 2 == 1) ? 4.0 : 2.0);
  return sum * h / 3.0;
}

// Integrates f over [0, pi] splitting at the interior breakpoints given.
double piecewise_simpson(const std::function<double(double)>& f, std::vector<double> cuts, int points) {
  cuts.push_back(0.0);
  cuts.push_back(kPi);
  std::sort(cuts.begin(), cuts.end());
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const double a = cuts[k];
    const double b = cuts[k + 1];
    const int panels = std::max(2, static_cast<int>(std::ceil(points * (b - a) / kPi)));
    total += simpson(f, a, b, panels);
  }
  return total;
}

// Frequency in (0, pi) where S(w) = level, if any.
std::vector<double> crossing(double alpha, double level) {
  if (alpha == 0.0) return {};
  const double c = (level - 1.0 - alpha * alpha) / (2.0 * alpha);
  if (c <= -1.0 || c >= 1.0) return {};
  return {std::acos(c)};
}

}  // namespace

double awgn_capacity(double power, double sigma2) {
  if (!(power >= 0.0) || !(sigma2 > 0.0)) throw ConfigError("awgn_capacity: need P >= 0 and sigma2 > 0");
  return 0.5 * std::log1p(power / sigma2);
}

double ma1_noise_psd(double alpha, double omega) { return 1.0 + alpha * alpha + 2.0 * alpha * std::cos(omega); }

WaterFillSolution ma1_ff_capacity(double power, double alpha, int quadrature_points) {
  if (!(power >= 0.0) || !std::isfinite(alpha)) throw ConfigError("ma1_ff_capacity: need P >= 0");
  if (quadrature_points < 16) throw ConfigError("ma1_ff_capacity: too few quadrature points");
  WaterFillSolution sol;
  sol.quadrature_points = quadrature_points;
  const double s_min = (1.0 - std::abs(alpha)) * (1.0 - std::abs(alpha));
  const double s_max = (1.0 + std::abs(alpha)) * (1.0 + std::abs(alpha));
  if (power == 0.0) {
    sol.water_level = s_min;
    return sol;
  }
  // (1/2pi) \int_{-pi}^{pi} = (1/pi) \int_0^pi by symmetry of the spectrum.
  auto allocated = [&](double level) {
    auto f = [&](double w) { return std::max(level - ma1_noise_psd(alpha, w), 0.0); };
    return piecewise_simpson(f, crossing(alpha, level), quadrature_points) / kPi;
  };
  double lo = s_min;
  double hi = s_max + power;
  double level = 0.5 * (lo + hi);
  double gap = 0.0;
  for (int it = 0; it < 200; ++it) {
    level = 0.5 * (lo + hi);
    gap = allocated(level) - power;
    if (std::abs(gap) < 1e-12 || hi - lo < 1e-15) break;
    (gap > 0.0 ? hi : lo) = level;
  }
  if (std::abs(gap) > 1e-9) throw NumericError("ma1_ff_capacity: water level did not converge");
  sol.water_level = level;
  sol.power_gap = std::abs(gap);
  auto rate = [&](double w) {
    const double s = ma1_noise_psd(alpha, w);
    return std::log(std::max(level, s) / s);
  };
  // (1/4pi) \int_{-pi}^{pi} = (1/2pi) \int_0^pi.
  sol.capacity = piecewise_simpson(rate, crossing(alpha, level), quadrature_points) / (2.0 * kPi);
  return sol;
}

Ma1FbSolution ma1_fb_capacity(double power, double alpha) {
  if (!(power >= 0.0) || !std::isfinite(alpha)) throw ConfigError("ma1_fb_capacity: need P >= 0");
  Ma1FbSolution sol;
  if (power == 0.0) return sol;
  const double a = std::abs(alpha);
  auto f = [&](double x) {
    const double m = 1.0 - a * x;
    return power * x * x - (1.0 - x * x) * m * m;
  };
  // f(0) = -1 < 0 and f(1) = P > 0; count sign changes on a grid as a
  // uniqueness diagnostic.
  constexpr int kScan = 4096;
  double prev = f(0.0);
  for (int k = 1; k <= kScan; ++k) {
    const double cur = f(static_cast<double>(k) / kScan);
    if ((prev < 0.0) != (cur < 0.0)) ++sol.sign_changes;
    prev = cur;
  }
  if (sol.sign_changes == 0) throw NumericError("ma1_fb_capacity: no sign change of the quartic in (0,1)");
  double lo = 0.0;
  double hi = 1.0;
  for (int it = 0; it < 200 && hi - lo > 1e-16; ++it) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) < 0.0 ? lo : hi) = mid;
  }
  sol.root = 0.5 * (lo + hi);
  sol.capacity = -std::log(sol.root);
  return sol;
}

QuarticGate validate_ma1_fb_quartic() {
  QuarticGate gate;
  gate.min_fb_minus_ff = std::numeric_limits<double>::infinity();
  const double powers[] = {0.25, 0.5, 1.0, 2.0, 4.0};
  const double alphas[] = {-0.9, -0.5, -0.1, 0.1, 0.5, 0.9};
  for (const double p : powers) {
    gate.awgn_reduction_error =
        std::max(gate.awgn_reduction_error, std::abs(ma1_fb_capacity(p, 0.0).capacity - awgn_capacity(p, 1.0)));
    for (const double a : alphas)
      gate.min_fb_minus_ff =
          std::min(gate.min_fb_minus_ff, ma1_fb_capacity(p, a).capacity - ma1_ff_capacity(p, a).capacity);
  }
  gate.trusted = gate.awgn_reduction_error < 1e-9 && gate.min_fb_minus_ff > 0.0;
  return gate;
}

double toeplitz_logdet(const std::vector<double>& r, int n) {
  if (n <= 0) throw ConfigError("toeplitz_logdet: n must be positive");
  auto lag = [&](int k) { return k < static_cast<int>(r.size()) ? r[static_cast<std::size_t>(k)] : 0.0; };
  if (!(lag(0) > 0.0)) throw NumericError("toeplitz_logdet: matrix is not positive definite");
  // Durbin recursion: err_k is the k-th one-step prediction error variance,
  // i.e. the k-th pivot of the LDL^T factorization.
  std::vector<double> a;  // prediction coefficients, a[j] multiplies x_{k-1-j}
  a.reserve(static_cast<std::size_t>(n));
  double err = lag(0);
  double logdet = std::log(err);
  for (int k = 1; k < n; ++k) {
    double acc = lag(k);
    for (int j = 0; j < k - 1; ++j) acc -= a[static_cast<std::size_t>(j)] * lag(k - 1 - j);
    const double refl = acc / err;
    if (!(std::abs(refl) < 1.0)) throw NumericError("toeplitz_logdet: matrix is not positive definite");
    std::vector<double> next(static_cast<std::size_t>(k));
    for (int j = 0; j < k - 1; ++j)
      next[static_cast<std::size_t>(j)] = a[static_cast<std::size_t>(j)] - refl * a[static_cast<std::size_t>(k - 2 - j)];
    next[static_cast<std::size_t>(k - 1)] = refl;
    a.swap(next);
    err *= (1.0 - refl * refl);
    logdet += std::log(err);
  }
  return logdet;
}

GaussianDiOracle gaussian_di_oracle(const GaussianInput& input, double alpha, int n) {
  if (n <= 0) throw ConfigError("gaussian_di_oracle: n must be positive");
  const std::vector<double> noise{1.0 + alpha * alpha, alpha};
  std::vector<double> output(std::max(input.autocovariance.size(), noise.size()), 0.0);
  for (std::size_t k = 0; k < output.size(); ++k) {
    if (k < input.autocovariance.size()) output[k] += input.autocovariance[k];
    if (k < noise.size()) output[k] += noise[k];
  }
  auto rate = [&](int m) { return (toeplitz_logdet(output, m) - toeplitz_logdet(noise, m)) / (2.0 * m); };
  GaussianDiOracle out;
  out.n = n;
  out.rate_n = rate(n);
  out.rate_2n = rate(2 * n);
  return out;
}

double gaussian_di_spectral(double power, double alpha, int quadrature_points) {
  auto f = [&](double w) { return std::log1p(power / ma1_noise_psd(alpha, w)); };
  return simpson(f, 0.0, kPi, quadrature_points) / (2.0 * kPi);
}

}  // namespace dinecap
