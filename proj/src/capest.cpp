// SPDX-License-Identifier: Apache-2.0
#include "dinecap/capest.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>

#include "dinecap/baselines.hpp"
#include "dinecap/errors.hpp"

namespace dinecap {

void TrainConfig::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(what);
  };
  need(batch > 0, "batch must be positive");
  need(seq_len > 0, "seq_len must be positive");
  need(dine_lr > 0.0 && ndt_lr > 0.0, "learning rates must be positive");
  need(iterations > 0, "iterations must be positive");
  need(dine_steps_per_ndt >= 1, "dine_steps_per_ndt must be >= 1");
  need(warmup >= 0, "warmup must be >= 0");
  need(power > 0.0 && std::isfinite(power), "power must be positive");
  need(eval_samples >= 100000, "eval_samples must be >= 100000");
  need(dine_hidden > 0 && ndt_hidden > 0, "hidden sizes must be positive");
  need(std::all_of(dine_head.begin(), dine_head.end(), [](Index w) { return w > 0; }) &&
           std::all_of(ndt_head.begin(), ndt_head.end(), [](Index w) { return w > 0; }),
       "head widths must be positive");
  need(margin >= 0.0, "margin must be >= 0");
  need(reference_floor > 0.0, "reference_floor must be positive");
  need(clip_norm >= 0.0, "clip_norm must be >= 0 (0 disables clipping)");
}

CurveSummary curve_summary(const std::vector<double>& curve, int window) {
  if (curve.empty()) throw ConfigError("curve_summary: empty curve");
  CurveSummary s;
  s.window = std::max(1, std::min(window, static_cast<int>(curve.size())));
  const auto w = static_cast<std::size_t>(s.window);
  double sum = 0.0;
  for (std::size_t k = 0; k < w; ++k) sum += curve[k];
  s.peak = sum / static_cast<double>(w);
  s.final_mean = s.peak;
  for (std::size_t k = w; k < curve.size(); ++k) {
    sum += curve[k] - curve[k - w];
    s.final_mean = sum / static_cast<double>(w);
    s.peak = std::max(s.peak, s.final_mean);
  }
  s.ratio = s.peak != 0.0 ? s.final_mean / s.peak : 1.0;
  return s;
}

McResult monte_carlo_eval(const DineModel& dine, const NdtModel& ndt, const ChannelSpec& spec,
                          long samples, Index seq_len, std::uint64_t seed) {
  if (samples <= 0 || seq_len <= 0) throw ConfigError("monte_carlo_eval: sizes must be positive");
  constexpr Index kChunk = 256;
  const Rng root(seed, "eval");
  Rng noise = root.split("noise");
  Rng chan = root.split("channel");
  auto channel = make_channel(spec);
  DineEvaluator eval(dine, dine.box, root.split("reference"));
  Index sequences = (samples + seq_len - 1) / seq_len;
  double power_sum = 0.0;
  McResult out;
  while (sequences > 0) {
    const Index b = std::min(kChunk, sequences);
    const Rollout path = rollout(ndt, *channel, b, seq_len, noise, chan);
    eval.add(path.trajectories());
    power_sum += path.realized_power * static_cast<double>(b * seq_len);
    out.samples += static_cast<long>(b * seq_len);
    sequences -= b;
  }
  out.values = eval.result();
  out.estimate = out.values.estimate();
  out.realized_power = power_sum / static_cast<double>(out.samples);
  return out;
}

Baseline analytic_baseline(const ChannelSpec& spec, double power, bool feedback) {
  spec.validate();
  if (spec.family == ChannelFamily::kAwgn) return {"awgn", awgn_capacity(power, spec.sigma2), true};
  if (!feedback) return {"ma1_ff_waterfilling", ma1_ff_capacity(power, spec.alpha).capacity, true};
  static const QuarticGate gate = validate_ma1_fb_quartic();
  return {"ma1_fb_quartic", ma1_fb_capacity(power, spec.alpha).capacity, gate.trusted};
}

double EstimateReport::estimate_bits() const { return estimate_nats / std::numbers::ln2; }

EstimateReport estimate_capacity(const ChannelSpec& spec, const TrainConfig& config,
                                 const ProgressFn& progress, TrainedModels* models) {
  spec.validate();
  config.validate();
  const auto started = std::chrono::steady_clock::now();

  EstimateReport report;
  report.channel = spec;
  report.config = config;
  report.baseline = analytic_baseline(spec, config.power, config.feedback);

  const Rng root(config.seed, "capacity");
  DineArch dine_arch;
  dine_arch.hidden = config.dine_hidden;
  dine_arch.head = config.dine_head;
  DineModel dine(dine_arch);
  Rng dine_init = root.split("dine.init");
  dine.init(dine_init);

  NdtArch ndt_arch;
  ndt_arch.hidden = config.ndt_hidden;
  ndt_arch.head = config.ndt_head;
  ndt_arch.feedback = config.feedback;
  ndt_arch.power = config.power;
  NdtModel ndt(ndt_arch);
  Rng ndt_init = root.split("ndt.init");
  ndt.init(ndt_init);

  auto channel = make_channel(spec);
  Rng noise = root.split("ndt.noise");
  Rng chan = root.split("channel.noise");
  Rng ndt_reference = root.split("ndt.reference");

  DineTrainOptions dine_opts;
  dine_opts.adam.learning_rate = config.dine_lr;
  dine_opts.adam.clip_norm = config.clip_norm;
  dine_opts.margin = config.margin;
  dine_opts.floor = config.reference_floor;
  dine_opts.ema_denominator = config.ema_denominator;
  DineTrainer trainer(dine, dine_opts, root.split("dine.reference"));

  AdamOptions ndt_opts;
  ndt_opts.learning_rate = config.ndt_lr;
  ndt_opts.clip_norm = config.clip_norm;
  Adam ndt_opt(ndt.params(), ndt_opts);

  auto dine_step = [&] {
    const Rollout path = rollout(ndt, *channel, config.batch, config.seq_len, noise, chan);
    trainer.step(path.trajectories());
  };

  try {
    for (long w = 0; w < config.warmup; ++w) dine_step();
    for (long it = 1; it <= config.iterations; ++it) {
      for (long k = 0; k < config.dine_steps_per_ndt; ++k) dine_step();

      const Rollout path = rollout(ndt, *channel, config.batch, config.seq_len, noise, chan);
      const Batch y_ref = sample_reference(dine.box, config.batch, config.seq_len, ndt_reference);
      DataGradients grads;
      const DvValues v = dine_objectives(dine, path.trajectories(), y_ref, false, &grads);
      zero_grads(ndt.params());
      rollout_backward(ndt, *channel, path, grads.dx, grads.dy);
      ndt_opt.step();

      const CurvePoint point{it, v.d_y, v.d_yx, v.estimate()};
      report.curve.push_back(point);
      if (progress) progress(point);
    }
  } catch (const NumericError& e) {
    report.failed = true;
    report.failure = std::string("training diverged after ") + std::to_string(report.curve.size()) +
                     " alternations: " + e.what();
  }

  if (!report.failed) {
    const McResult mc = monte_carlo_eval(dine, ndt, spec, config.eval_samples, config.seq_len,
                                         root.split("final").key());
    report.d_y = mc.values.d_y;
    report.d_yx = mc.values.d_yx;
    report.raw_estimate_nats = mc.estimate;
    report.estimate_nats = std::max(0.0, mc.estimate);
    report.realized_power = mc.realized_power;
    report.eval_samples = mc.samples;
    if (report.baseline && report.baseline->nats > 0.0)
      report.relative_error = std::abs(report.estimate_nats - report.baseline->nats) / report.baseline->nats;
  }
  if (!report.curve.empty()) {
    std::vector<double> values;
    values.reserve(report.curve.size());
    for (const auto& p : report.curve) values.push_back(p.estimate);
    report.summary = curve_summary(values);
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  if (models != nullptr) {
    models->dine = std::move(dine);
    models->ndt = std::move(ndt);
  }
  return report;
}

}  // namespace dinecap
