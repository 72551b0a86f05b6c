// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "dinecap/baselines.hpp"
#include "dinecap/capest.hpp"
#include "dinecap/errors.hpp"
#include "dinecap/io.hpp"

using namespace dinecap;

namespace {

TrainConfig tiny_config(bool feedback) {
  TrainConfig c;
  c.batch = 8;
  c.seq_len = 8;
  c.iterations = 20;
  c.warmup = 10;
  c.dine_hidden = 4;
  c.dine_head = {4};
  c.ndt_hidden = 4;
  c.ndt_head = {4};
  c.dine_lr = 1e-3;
  c.ndt_lr = 1e-3;
  c.feedback = feedback;
  c.eval_samples = 100000;
  c.seed = 3;
  return c;
}

void make_constant(Potential& p, double c) {
  auto& out = p.head().layers().back();
  out.weight().value.setZero();
  out.bias().value.setConstant(c);
}

}  // namespace

TEST_CASE("train config validation") {
  CHECK_NOTHROW(TrainConfig{}.validate());
  auto bad = [](auto mutate) {
    TrainConfig c;
    mutate(c);
    CHECK_THROWS_AS(c.validate(), ConfigError);
  };
  bad([](TrainConfig& c) { c.batch = 0; });
  bad([](TrainConfig& c) { c.seq_len = -1; });
  bad([](TrainConfig& c) { c.power = 0.0; });
  bad([](TrainConfig& c) { c.dine_lr = 0.0; });
  bad([](TrainConfig& c) { c.dine_steps_per_ndt = 0; });
  bad([](TrainConfig& c) { c.eval_samples = 99999; });
  bad([](TrainConfig& c) { c.dine_head = {4, 0}; });
  bad([](TrainConfig& c) { c.reference_floor = 0.0; });
}

TEST_CASE("curve summary examples") {
  const CurveSummary flat = curve_summary(std::vector<double>(300, 0.4));
  CHECK(flat.ratio == doctest::Approx(1.0));
  std::vector<double> rising(300);
  for (std::size_t k = 0; k < rising.size(); ++k) rising[k] = static_cast<double>(k);
  const CurveSummary up = curve_summary(rising);
  CHECK(up.final_mean == up.peak);
  CHECK(up.final_mean == doctest::Approx(249.5));
  std::vector<double> falling(rising.rbegin(), rising.rend());
  CHECK(curve_summary(falling).ratio < 0.5);
  CHECK(curve_summary({1.0, 2.0, 3.0}).window == 3);
  CHECK_THROWS_AS(curve_summary({}), ConfigError);
}

TEST_CASE("analytic baselines by channel and feedback") {
  CHECK(analytic_baseline(ChannelSpec::awgn(), 1.0, false).nats == doctest::Approx(0.5 * std::log(2.0)));
  CHECK(analytic_baseline(ChannelSpec::awgn(), 1.0, true).kind == "awgn");
  const Baseline ff = analytic_baseline(ChannelSpec::ma1(0.5), 1.0, false);
  const Baseline fb = analytic_baseline(ChannelSpec::ma1(0.5), 1.0, true);
  CHECK(ff.kind == "ma1_ff_waterfilling");
  CHECK(fb.kind == "ma1_fb_quartic");
  CHECK(fb.trusted);
  CHECK(ff.nats == doctest::Approx(ma1_ff_capacity(1.0, 0.5).capacity));
  CHECK(fb.nats == doctest::Approx(ma1_fb_capacity(1.0, 0.5).capacity));
}

TEST_CASE("evaluation of constant potentials is exactly zero") {
  DineArch arch;
  arch.hidden = 4;
  arch.head = {4};
  DineModel dine(arch);
  Rng r(1);
  dine.init(r);
  make_constant(dine.y_potential(), 0.3);
  make_constant(dine.yx_potential(), -1.0);
  dine.box = ReferenceBox{{-5.0}, {5.0}};
  NdtArch na;
  na.hidden = 4;
  na.head = {4};
  NdtModel ndt(na);
  ndt.init(r);
  const McResult mc = monte_carlo_eval(dine, ndt, ChannelSpec::awgn(), 10000, 16, 5);
  CHECK(mc.estimate == 0.0);
  CHECK(mc.samples >= 10000);
  CHECK(std::abs(mc.realized_power - 1.0) < 1e-6);
}

TEST_CASE("a short capacity run is reproducible bit for bit") {
  for (bool fb : {false, true}) {
    const ChannelSpec spec = ChannelSpec::ma1(0.5);
    const EstimateReport a = estimate_capacity(spec, tiny_config(fb));
    const EstimateReport b = estimate_capacity(spec, tiny_config(fb));
    REQUIRE_FALSE(a.failed);
    nlohmann::json ja = report_to_json(a);
    nlohmann::json jb = report_to_json(b);
    ja.erase("timing");
    jb.erase("timing");
    CHECK(ja.dump() == jb.dump());
    CHECK(a.curve.size() == 20);

    // Bookkeeping: the raw estimate is the component difference and the
    // reported value is its clamp at zero.
    CHECK(a.raw_estimate_nats == a.d_yx - a.d_y);
    CHECK(a.estimate_nats == std::max(0.0, a.raw_estimate_nats));
    CHECK(std::abs(a.realized_power - 1.0) < 1e-6);
    CHECK(a.eval_samples >= 100000);
    CHECK(a.baseline.has_value());
    for (const auto& p : a.curve) CHECK(p.estimate == p.d_yx - p.d_y);
  }
}

TEST_CASE("a different seed gives a different run") {
  TrainConfig c = tiny_config(false);
  const EstimateReport a = estimate_capacity(ChannelSpec::awgn(), c);
  c.seed = 4;
  const EstimateReport b = estimate_capacity(ChannelSpec::awgn(), c);
  CHECK(a.raw_estimate_nats != b.raw_estimate_nats);
}

TEST_CASE("progress callback sees every alternation and models are returned") {
  long calls = 0;
  TrainedModels models;
  const EstimateReport r = estimate_capacity(
      ChannelSpec::awgn(), tiny_config(true), [&](const CurvePoint& p) { CHECK(p.iteration == ++calls); },
      &models);
  CHECK(calls == 20);
  CHECK(models.ndt.arch().feedback);
  CHECK(models.dine.box.contains(Batch{Mat::Zero(1, 1)}));
  CHECK_FALSE(r.failed);
}

TEST_CASE("divergence is reported instead of thrown") {
  TrainConfig c = tiny_config(false);
  c.dine_lr = 1e308;
  c.clip_norm = 0.0;
  const EstimateReport r = estimate_capacity(ChannelSpec::awgn(), c);
  CHECK(r.failed);
  CHECK(r.failure.find("diverged") != std::string::npos);
  CHECK(report_to_json(r)["failed"].get<bool>());
}

TEST_CASE("invalid channels are rejected before training") {
  CHECK_THROWS_AS(estimate_capacity(ChannelSpec::awgn(-1.0), tiny_config(false)), ConfigError);
  TrainConfig c = tiny_config(false);
  c.eval_samples = 10;
  CHECK_THROWS_AS(estimate_capacity(ChannelSpec::awgn(), c), ConfigError);
}

// ---------------------------------------------------------------- file formats

TEST_CASE("trajectory csv round trip") {
  Series s;
  s.x = Mat(3, 2);
  s.y = Mat(3, 1);
  s.x << 0.1, -2.5, 1e-300, 3.0, std::numbers::pi, 0.0;
  s.y << 1.0 / 3.0, -0.0, 12345.678;
  std::stringstream ss;
  write_trajectory_csv(ss, s);
  CHECK(ss.str().rfind("x0,x1,y0\n", 0) == 0);
  const Series back = read_trajectory_csv(ss);
  CHECK(back.x == s.x);
  CHECK(back.y == s.y);
}

TEST_CASE("trajectory csv errors name the row") {
  auto parse_error = [](const std::string& text) {
    std::stringstream ss(text);
    try {
      read_trajectory_csv(ss);
    } catch (const ParseError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(parse_error("").find("row 1") != std::string::npos);
  CHECK(parse_error("x0,y0\n").find("no data") != std::string::npos);
  CHECK(parse_error("a,b\n1,2\n").find("row 1") != std::string::npos);
  CHECK(parse_error("y0,x0\n1,2\n").find("row 1") != std::string::npos);
  CHECK(parse_error("x0,y0\n1,2\n3,oops\n").find("row 3") != std::string::npos);
  CHECK(parse_error("x0,y0\n1,2\n3\n").find("row 3") != std::string::npos);
  CHECK(parse_error("x0,y0\n1,2\n3,4,5\n").find("row 3") != std::string::npos);
  CHECK(parse_error("x0,y0\n1,2\n").find("no error") != std::string::npos);
  CHECK_THROWS_AS(read_trajectory_csv_file("/nonexistent/file.csv"), ParseError);
}

TEST_CASE("curve csv round trip") {
  const std::vector<CurvePoint> curve{{1, 0.1, 0.5, 0.4}, {2, -0.2, 0.3, 0.5}};
  std::stringstream ss;
  write_curve_csv(ss, curve);
  const auto back = read_curve_csv(ss);
  REQUIRE(back.size() == 2);
  CHECK(back[1].iteration == 2);
  CHECK(back[1].d_y == -0.2);
  CHECK(back[1].estimate == 0.5);
  std::stringstream bad("iteration,dY\n");
  CHECK_THROWS_AS(read_curve_csv(bad), ParseError);
}

TEST_CASE("configuration keys") {
  const RunConfig c = apply_config(nlohmann::json::parse(R"({
      "family": "ma1", "alpha": -0.5, "power": 2, "feedback": true, "batch": 16,
      "seq_len": 32, "iterations": 100, "dine_head": [8, 8], "seed": 9,
      "window_sampling": "random", "output_dir": "out"})"));
  CHECK(c.channel.family == ChannelFamily::kMa1);
  CHECK(c.channel.alpha == -0.5);
  CHECK(c.train.power == 2.0);
  CHECK(c.train.feedback);
  CHECK(c.train.dine_head == std::vector<Index>{8, 8});
  CHECK(c.sampling == WindowSampling::kRandomStarts);
  CHECK(c.output_dir == "out");

  // Round trip through JSON.
  const RunConfig back = apply_config(config_to_json(c));
  CHECK(config_to_json(back) == config_to_json(c));

  const DineTrainConfig d = dine_config_from(c);
  CHECK(d.batch == 16);
  CHECK(d.arch.head == std::vector<Index>{8, 8});
}

TEST_CASE("configuration rejects unknown keys and invalid values") {
  using nlohmann::json;
  CHECK_THROWS_AS(apply_config(json::parse(R"({"powr": 1})")), ConfigError);
  CHECK_THROWS_AS(apply_config(json::parse(R"({"power": -1})")), ConfigError);
  CHECK_THROWS_AS(apply_config(json::parse(R"({"power": "high"})")), ConfigError);
  CHECK_THROWS_AS(apply_config(json::parse(R"({"family": "bsc"})")), ConfigError);
  CHECK_THROWS_AS(apply_config(json::parse(R"({"alpha": 0.5})")), ConfigError);  // awgn has no alpha
  CHECK_THROWS_AS(apply_config(json::parse(R"({"family": "ma1", "sigma2": 2})")), ConfigError);
  CHECK_THROWS_AS(apply_config(json::parse(R"({"window_sampling": "sometimes"})")), ConfigError);
  CHECK_THROWS_AS(apply_config(json::parse("[1, 2]")), ConfigError);
}

TEST_CASE("report json carries estimate, baseline and timing separately") {
  const EstimateReport r = estimate_capacity(ChannelSpec::awgn(), tiny_config(false));
  const nlohmann::json j = report_to_json(r);
  CHECK(j["estimate"]["nats"].get<double>() == r.estimate_nats);
  CHECK(j["estimate"]["bits"].get<double>() == doctest::Approx(r.estimate_nats / std::numbers::ln2));
  CHECK(j["baseline"]["kind"] == "awgn");
  CHECK(j.contains("timing"));
  CHECK(j["config"]["seed"].get<std::uint64_t>() == 3);
  CHECK_FALSE(j["config"].contains("output_dir"));
}
