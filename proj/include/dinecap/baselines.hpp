// SPDX-License-Identifier: Apache-2.0
//
// Analytic capacity baselines (nats per channel use) for the AWGN and
// MA(1)-AGN channels, and a covariance-determinant oracle for the directed
// information rate of jointly Gaussian feedforward systems.
#pragma once

#include <vector>

namespace dinecap {

/// 0.5 ln(1 + P / sigma2).
double awgn_capacity(double power, double sigma2);

/// MA(1) noise spectrum S(w) = 1 + a^2 + 2 a cos w.
double ma1_noise_psd(double alpha, double omega);

struct WaterFillSolution {
  double water_level = 0.0;
  double capacity = 0.0;
  int quadrature_points = 0;
  double power_gap = 0.0;  // |allocated power - P| at the returned level
};

/// Water-filling over the MA(1) noise spectrum. Integrals are evaluated by
/// composite Simpson on each smooth piece of [0, pi] (the kink where the
/// water level meets the spectrum is located in closed form).
WaterFillSolution ma1_ff_capacity(double power, double alpha, int quadrature_points = 1 << 14);

struct Ma1FbSolution {
  double root = 1.0;  // x0 in (0, 1]
  double capacity = 0.0;
  int sign_changes = 0;  // sign changes of the quartic found on a scan of (0, 1)
};

/// Feedback capacity -ln x0 with x0 the root in (0,1) of
/// P x^2 = (1 - x^2)(1 - |alpha| x)^2.
Ma1FbSolution ma1_fb_capacity(double power, double alpha);

/// Quartic validation gate: the alpha = 0 reduction matches AWGN and the
/// feedback value dominates the feedforward value on a (P, alpha) grid.
struct QuarticGate {
  bool trusted = false;
  double awgn_reduction_error = 0.0;
  double min_fb_minus_ff = 0.0;
};
QuarticGate validate_ma1_fb_quartic();

/// Autocovariance-specified Gaussian input, independent of the channel noise.
struct GaussianInput {
  std::vector<double> autocovariance;  // r_0, r_1, ... (missing lags are zero)
  static GaussianInput iid(double power) { return {{power}}; }
};

struct GaussianDiOracle {
  double rate_n = 0.0;   // (1/2n) ln(det Sigma_Y / det Sigma_Z) at n
  double rate_2n = 0.0;  // same at 2n, exposes convergence
  int n = 0;
};

/// log det of the symmetric positive-definite Toeplitz matrix with first
/// column `r` (size n), by the Levinson-Durbin recursion. Throws NumericError
/// if the matrix is not positive definite.
double toeplitz_logdet(const std::vector<double>& r, int n);

/// Per-use DI rate of X -> Y = X + Z for Gaussian X independent of MA(1)
/// noise Z with coefficient alpha (alpha = 0 gives unit-variance AWGN).
GaussianDiOracle gaussian_di_oracle(const GaussianInput& input, double alpha, int n);

/// (1/4pi) \int_{-pi}^{pi} ln(1 + P / S(w)) dw for i.i.d. N(0, P) input.
double gaussian_di_spectral(double power, double alpha, int quadrature_points = 1 << 14);

}  // namespace dinecap
