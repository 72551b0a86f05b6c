// SPDX-License-Identifier: Apache-2.0
//
// Capacity estimation by alternating maximization: DINE tracks the rate of
// the current input distribution, the NDT ascends that rate through the
// channel, and a long Monte-Carlo evaluation produces the final estimate.
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dinecap/channel.hpp"
#include "dinecap/dine.hpp"
#include "dinecap/ndt.hpp"

namespace dinecap {

struct TrainConfig {
  Index batch = 32;
  Index seq_len = 64;
  double dine_lr = 1e-4;
  double ndt_lr = 1e-4;
  long iterations = 5000;  // alternations
  long dine_steps_per_ndt = 3;
  long warmup = 500;  // DINE-only steps before the first NDT update
  double power = 1.0;
  bool feedback = false;
  long eval_samples = 1000000;
  std::uint64_t seed = 0;
  Index dine_hidden = 64;
  std::vector<Index> dine_head{64};
  Index ndt_hidden = 64;
  std::vector<Index> ndt_head{64};
  double margin = 0.05;
  double reference_floor = 0.1;
  double clip_norm = 1.0;
  bool ema_denominator = false;

  /// Throws ConfigError on any violated invariant.
  void validate() const;
};

struct CurveSummary {
  int window = 0;
  double peak = 0.0;
  double final_mean = 0.0;
  double ratio = 0.0;  // final_mean / peak
};

/// Moving-average smoothing over `window` points (clipped to the curve
/// length); peak and last value of the smoothed curve.
CurveSummary curve_summary(const std::vector<double>& curve, int window = 100);

struct McResult {
  DvValues values;
  double estimate = 0.0;
  double realized_power = 0.0;
  long samples = 0;
};

/// Fresh rollouts of the frozen NDT totalling at least `samples` channel uses,
/// evaluated through both frozen potentials.
McResult monte_carlo_eval(const DineModel& dine, const NdtModel& ndt, const ChannelSpec& spec,
                          long samples, Index seq_len, std::uint64_t seed);

struct Baseline {
  std::string kind;  // "awgn", "ma1_ff_waterfilling", "ma1_fb_quartic"
  double nats = 0.0;
  bool trusted = true;
};

/// Analytic reference value for a channel/power/feedback combination.
Baseline analytic_baseline(const ChannelSpec& spec, double power, bool feedback);

struct EstimateReport {
  ChannelSpec channel;
  TrainConfig config;
  double estimate_nats = 0.0;      // clamped at 0
  double raw_estimate_nats = 0.0;  // d_yx - d_y as evaluated
  double d_y = 0.0;
  double d_yx = 0.0;
  double realized_power = 0.0;
  long eval_samples = 0;
  std::optional<Baseline> baseline;
  std::optional<double> relative_error;
  std::vector<CurvePoint> curve;
  CurveSummary summary;
  bool failed = false;
  std::string failure;
  double wall_seconds = 0.0;

  [[nodiscard]] double estimate_bits() const;
};

struct TrainedModels {
  DineModel dine;
  NdtModel ndt;
};

using ProgressFn = std::function<void(const CurvePoint&)>;

/// Runs the full alternating procedure and the final evaluation. When
/// `models` is non-null it receives the trained DINE and NDT.
EstimateReport estimate_capacity(const ChannelSpec& spec, const TrainConfig& config,
                                 const ProgressFn& progress = {}, TrainedModels* models = nullptr);

}  // namespace dinecap
