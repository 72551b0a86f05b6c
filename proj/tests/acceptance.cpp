// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "dinecap/baselines.hpp"
#include "dinecap/capest.hpp"
#include "dinecap/channel.hpp"
#include "dinecap/dine.hpp"
#include "dinecap/gradcheck.hpp"
#include "dinecap/io.hpp"

using namespace dinecap;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS" : "FAIL") << " criterion " << id << ": " << detail << std::endl;
  if (!ok) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool within(double estimate, double target) {
  return std::abs(estimate - target) <= std::max(0.03, 0.1 * target);
}

// Shared setting for the capacity runs.
TrainConfig capacity_config(double power, bool feedback, long iterations) {
  TrainConfig c;
  c.power = power;
  c.feedback = feedback;
  c.iterations = iterations;
  c.dine_hidden = 32;
  c.dine_head = {32};
  c.ndt_hidden = 32;
  c.ndt_head = {32};
  c.dine_lr = 1e-3;
  c.ndt_lr = 1e-3;
  c.batch = 32;
  c.seq_len = 64;
  c.warmup = 500;
  c.eval_samples = 1000000;
  c.seed = 0;
  return c;
}

std::string describe(const EstimateReport& r) {
  std::ostringstream s;
  s << "P=" << r.config.power << " est " << r.estimate_nats << " baseline "
    << (r.baseline ? r.baseline->nats : 0.0) << " (" << r.wall_seconds << " s)";
  if (r.failed) s << " failed: " << r.failure;
  return s.str();
}

BatchSource gaussian_source(Index batch, Index seq_len, const std::function<Mat(const Mat&, Rng&)>& y_of) {
  return [=](Rng& rng) {
    Trajectories tr;
    for (Index t = 0; t < seq_len; ++t) {
      tr.x.push_back(rng.normal_matrix(batch, 1));
      tr.y.push_back(y_of(tr.x.back(), rng));
    }
    return tr;
  };
}

DineTrainConfig dine_only_config(long iterations) {
  DineTrainConfig cfg;
  cfg.arch.hidden = 32;
  cfg.arch.head = {32};
  cfg.batch = 32;
  cfg.seq_len = 64;
  cfg.iterations = iterations;
  cfg.options.adam.learning_rate = 1e-3;
  cfg.seed = 1;
  return cfg;
}

double evaluate(const DineModel& model, const BatchSource& source, double samples, std::uint64_t seed) {
  Rng eval(seed);
  DineEvaluator ev(model, model.box, eval.split("reference"));
  Rng data = eval.split("data");
  while (ev.samples() < samples) ev.add(source(data));
  return ev.result().estimate();
}

void gradient_suites() {
  const auto t0 = std::chrono::steady_clock::now();
  GradSuiteOptions opt;
  opt.hidden = 8;
  opt.steps = 6;
  opt.batch = 4;
  double worst = 0.0;
  std::string worst_block;
  for (const char* suite : {"nn", "dine", "ndt", "rollout"}) {
    const GradCheckReport r = run_grad_suite(suite, opt);
    for (const auto& b : r.blocks) {
      if (!(b.max_rel_error <= worst)) {
        worst = b.max_rel_error;
        worst_block = std::string(suite) + "/" + b.name;
      }
    }
  }
  const double secs = seconds_since(t0);
  std::ostringstream s;
  s << "worst relative error " << worst << " (" << worst_block << "), " << secs << " s";
  report(1, worst < 1e-4 && secs < 60.0, s.str());
}

void baseline_consistency() {
  double ff_err = 0.0;
  double fb_err = 0.0;
  double min_gain = 1e300;
  for (double p : {0.25, 0.5, 1.0, 2.0, 4.0}) {
    ff_err = std::max(ff_err, std::abs(ma1_ff_capacity(p, 0.0).capacity - awgn_capacity(p, 1.0)));
    fb_err = std::max(fb_err, std::abs(ma1_fb_capacity(p, 0.0).capacity - awgn_capacity(p, 1.0)));
    for (double a : {0.1, -0.1, 0.5, -0.5, 0.9, -0.9}) {
      min_gain = std::min(min_gain, ma1_fb_capacity(p, a).capacity - ma1_ff_capacity(p, a).capacity);
    }
  }
  const QuarticGate gate = validate_ma1_fb_quartic();
  std::ostringstream s;
  s << "ff-awgn " << ff_err << ", fb-awgn " << fb_err << ", min(fb-ff) " << min_gain
    << ", gate " << (gate.trusted ? "trusted" : "untrusted");
  report(2, ff_err < 1e-8 && fb_err < 1e-9 && min_gain >= 0.0 && gate.trusted, s.str());
}

void dine_vs_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  const double alpha = 0.5;
  const GaussianDiOracle oracle = gaussian_di_oracle(GaussianInput::iid(1.0), alpha, 1024);
  const double spectral = gaussian_di_spectral(1.0, alpha);
  const ChannelSpec spec = ChannelSpec::ma1(alpha);
  const Index b = 32;
  const Index t = 64;
  // Each batch is a fresh block of b independent channel realizations.
  BatchSource src = [&](Rng& rng) {
    auto ch = make_channel(spec);
    ch->reset(b);
    Trajectories tr;
    for (Index k = 0; k < t; ++k) {
      tr.x.push_back(rng.normal_matrix(b, 1));
      tr.y.push_back(ch->step(tr.x.back(), rng));
    }
    return tr;
  };
  const DineTrainResult res = dine_train(src, dine_only_config(1500));
  const double est = res.failed ? NAN : evaluate(res.model, src, 1e5, 99);
  std::ostringstream s;
  s << "estimate " << est << " oracle " << oracle.rate_n << " spectral " << spectral << ", "
    << seconds_since(t0) << " s";
  const bool cross = std::abs(oracle.rate_n - spectral) < 1e-3;
  report(3, !res.failed && cross && std::abs(est - oracle.rate_n) <= 0.1 * oracle.rate_n, s.str());
}

void independence_null() {
  BatchSource src = gaussian_source(32, 64, [](const Mat& x, Rng& rng) {
    return Mat(rng.normal_matrix(x.rows(), 1));
  });
  const DineTrainResult res = dine_train(src, dine_only_config(500));
  const double est = res.failed ? NAN : evaluate(res.model, src, 1e5, 123);
  std::ostringstream s;
  s << "estimate " << est << " at 1e5 samples";
  report(4, !res.failed && std::abs(est) <= 0.02, s.str());
}

}  // namespace

int main() {
  std::cout.setf(std::ios::fixed);
  std::cout.precision(6);

  gradient_suites();
  baseline_consistency();
  dine_vs_oracle();
  independence_null();

  // AWGN points; the P = 1 models are kept for the Monte-Carlo check.
  TrainedModels awgn_models{DineModel(DineArch{}), NdtModel(NdtArch{})};
  {
    bool ok = true;
    std::string detail;
    for (double p : {0.5, 1.0, 2.0, 4.0}) {
      const EstimateReport r = estimate_capacity(ChannelSpec::awgn(), capacity_config(p, false, 1000), {},
                                                 p == 1.0 ? &awgn_models : nullptr);
      ok = ok && !r.failed && within(r.estimate_nats, awgn_capacity(p, 1.0));
      detail += (detail.empty() ? "" : "; ") + describe(r);
    }
    report(5, ok, detail);
  }

  const ChannelSpec ma1 = ChannelSpec::ma1(0.5);
  double ff_at_one = NAN;
  {
    bool ok = true;
    std::string detail;
    for (double p : {0.5, 1.0, 2.0}) {
      const EstimateReport r = estimate_capacity(ma1, capacity_config(p, false, 1000));
      if (p == 1.0) ff_at_one = r.estimate_nats;
      ok = ok && !r.failed && within(r.estimate_nats, ma1_ff_capacity(p, 0.5).capacity);
      detail += (detail.empty() ? "" : "; ") + describe(r);
    }
    report(6, ok, detail);
  }

  {
    const EstimateReport r = estimate_capacity(ma1, capacity_config(1.0, true, 2000));
    const double target = ma1_fb_capacity(1.0, 0.5).capacity;
    std::ostringstream s;
    s << describe(r) << ", feedforward estimate " << ff_at_one;
    report(7, !r.failed && within(r.estimate_nats, target) && r.estimate_nats >= ff_at_one - 0.01, s.str());

    std::ostringstream p;
    p << "final " << r.summary.final_mean << " peak " << r.summary.peak << " ratio " << r.summary.ratio;
    report(8, !r.failed && r.summary.window == 100 && r.summary.ratio >= 0.95, p.str());
  }

  {
    TrainConfig c = capacity_config(1.0, true, 100);
    c.dine_hidden = 8;
    c.dine_head = {8};
    c.ndt_hidden = 8;
    c.ndt_head = {8};
    c.warmup = 20;
    c.eval_samples = 100000;
    c.seed = 11;
    nlohmann::json a = report_to_json(estimate_capacity(ma1, c));
    nlohmann::json b = report_to_json(estimate_capacity(ma1, c));
    a.erase("timing");
    b.erase("timing");
    const bool identical = a.dump() == b.dump();

    const McResult small = monte_carlo_eval(awgn_models.dine, awgn_models.ndt, ChannelSpec::awgn(), 100000, 64, 5);
    const McResult large = monte_carlo_eval(awgn_models.dine, awgn_models.ndt, ChannelSpec::awgn(), 1000000, 64, 6);
    const double gap = std::abs(small.estimate - large.estimate);
    std::ostringstream s;
    s << "reports " << (identical ? "bit-identical" : "differ") << "; 1e5 vs 1e6 samples " << small.estimate
      << " vs " << large.estimate << " (gap " << gap << ")";
    report(9, identical && gap < 0.02, s.str());
  }

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
