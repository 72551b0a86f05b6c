// SPDX-License-Identifier: Apache-2.0
#include "dinecap/dinecap.h"

#include <cmath>
#include <fstream>
#include <memory>
#include <numbers>
#include <sstream>
#include <string>

#include <json.hpp>

#include "dinecap/baselines.hpp"
#include "dinecap/capest.hpp"
#include "dinecap/errors.hpp"
#include "dinecap/gradcheck.hpp"
#include "dinecap/io.hpp"
#include "dinecap/ndt.hpp"

struct dinecap_result {
  std::string json;
  std::string curve_csv;
  double estimate = 0.0;
  int ok = 1;
};

namespace {

using dinecap::ConfigError;
using nlohmann::json;

thread_local std::string g_last_error;

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Fn>
dinecap_status guarded(Fn&& fn) {
  g_last_error.clear();
  try {
    fn();
    return DINECAP_OK;
  } catch (const dinecap::ConfigError& e) {
    g_last_error = e.what();
    return DINECAP_ERR_CONFIG;
  } catch (const dinecap::DimensionError& e) {
    g_last_error = e.what();
    return DINECAP_ERR_DIMENSION;
  } catch (const dinecap::NumericError& e) {
    g_last_error = e.what();
    return DINECAP_ERR_NUMERIC;
  } catch (const dinecap::UnsupportedError& e) {
    g_last_error = e.what();
    return DINECAP_ERR_UNSUPPORTED;
  } catch (const dinecap::ParseError& e) {
    g_last_error = e.what();
    return DINECAP_ERR_PARSE;
  } catch (const IoError& e) {
    g_last_error = e.what();
    return DINECAP_ERR_IO;
  } catch (const std::invalid_argument& e) {
    g_last_error = e.what();
    return DINECAP_ERR_INVALID_ARGUMENT;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return DINECAP_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return DINECAP_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) throw std::invalid_argument(std::string(what) + " must not be null");
}

dinecap::RunConfig parse_config(const char* text) {
  if (text == nullptr || *text == '\0') return {};
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return dinecap::apply_config(j);
}

std::unique_ptr<dinecap_result> make_result() { return std::make_unique<dinecap_result>(); }

dinecap::ProgressFn wrap(dinecap_progress_fn fn, void* user) {
  if (fn == nullptr) return {};
  return [fn, user](const dinecap::CurvePoint& p) { fn(p.iteration, p.d_y, p.d_yx, p.estimate, user); };
}

std::string curve_text(const std::vector<dinecap::CurvePoint>& curve) {
  std::ostringstream os;
  dinecap::write_curve_csv(os, curve);
  return os.str();
}

}  // namespace

extern "C" {

const char* dinecap_version(void) { return "0.1.0"; }

const char* dinecap_status_string(dinecap_status status) {
  switch (status) {
    case DINECAP_OK:
      return "ok";
    case DINECAP_ERR_INVALID_ARGUMENT:
      return "invalid argument";
    case DINECAP_ERR_CONFIG:
      return "invalid configuration";
    case DINECAP_ERR_DIMENSION:
      return "dimension mismatch";
    case DINECAP_ERR_NUMERIC:
      return "numeric error";
    case DINECAP_ERR_UNSUPPORTED:
      return "unsupported configuration";
    case DINECAP_ERR_PARSE:
      return "parse error";
    case DINECAP_ERR_IO:
      return "i/o error";
    case DINECAP_ERR_INTERNAL:
      return "internal error";
  }
  return "unknown status";
}

const char* dinecap_last_error(void) { return g_last_error.c_str(); }

dinecap_status dinecap_check_config(const char* config_json, dinecap_result** out) {
  return guarded([&] {
    require(out, "out");
    *out = nullptr;
    const dinecap::RunConfig cfg = parse_config(config_json);
    cfg.channel.validate();
    cfg.train.validate();
    auto r = make_result();
    r->json = dinecap::config_to_json(cfg).dump(2);
    *out = r.release();
  });
}

dinecap_status dinecap_baseline(const char* config_json, dinecap_result** out) {
  return guarded([&] {
    require(out, "out");
    *out = nullptr;
    const dinecap::RunConfig cfg = parse_config(config_json);
    const auto& ch = cfg.channel;
    const double p = cfg.train.power;
    const dinecap::Baseline b = dinecap::analytic_baseline(ch, p, cfg.train.feedback);

    json j;
    j["channel"] = {{"family", ch.family_name()}, {"alpha", ch.alpha}, {"sigma2", ch.sigma2}};
    j["power"] = p;
    j["feedback"] = cfg.train.feedback;
    j["kind"] = b.kind;
    j["nats"] = b.nats;
    j["bits"] = b.nats / std::numbers::ln2;
    j["trusted"] = b.trusted;
    if (ch.family == dinecap::ChannelFamily::kMa1) {
      const auto ff = dinecap::ma1_ff_capacity(p, ch.alpha);
      const auto fb = dinecap::ma1_fb_capacity(p, ch.alpha);
      j["feedforward"] = {{"nats", ff.capacity}, {"water_level", ff.water_level}};
      j["feedback_quartic"] = {{"nats", fb.capacity}, {"root", fb.root}};
    }
    auto r = make_result();
    r->json = j.dump(2);
    r->estimate = b.nats;
    r->ok = b.trusted ? 1 : 0;
    *out = r.release();
  });
}

dinecap_status dinecap_capacity(const char* config_json, const char* ndt_path,
                                dinecap_progress_fn progress, void* user, dinecap_result** out) {
  return guarded([&] {
    require(out, "out");
    *out = nullptr;
    const dinecap::RunConfig cfg = parse_config(config_json);
    dinecap::TrainedModels models;
    const dinecap::EstimateReport report =
        dinecap::estimate_capacity(cfg.channel, cfg.train, wrap(progress, user), &models);
    if (ndt_path != nullptr && !report.failed) {
      try {
        models.ndt.save(ndt_path);
      } catch (const std::exception& e) {
        throw IoError(e.what());
      }
    }
    auto r = make_result();
    r->json = dinecap::report_to_json(report).dump(2);
    r->curve_csv = curve_text(report.curve);
    r->estimate = report.estimate_nats;
    r->ok = report.failed ? 0 : 1;
    *out = r.release();
  });
}

dinecap_status dinecap_di_estimate(const char* csv_path, const char* config_json,
                                   dinecap_progress_fn progress, void* user, dinecap_result** out) {
  return guarded([&] {
    require(csv_path, "csv_path");
    require(out, "out");
    *out = nullptr;
    const dinecap::RunConfig cfg = parse_config(config_json);
    cfg.train.validate();
    if (!std::ifstream(csv_path)) throw IoError(std::string("cannot open ") + csv_path);
    const dinecap::Series series = dinecap::read_trajectory_csv_file(csv_path);
    const dinecap::Index need = cfg.train.batch * cfg.train.seq_len;
    if (series.length() < need)
      throw dinecap::DimensionError("trajectory has " + std::to_string(series.length()) +
                        " rows; at least batch * seq_len = " + std::to_string(need) + " required");

    dinecap::DineTrainConfig dcfg = dinecap::dine_config_from(cfg);
    dcfg.arch.x_dim = series.x.cols();
    dcfg.arch.y_dim = series.y.cols();
    const auto source =
        dinecap::window_source(series, dcfg.batch, dcfg.seq_len, cfg.sampling);
    dinecap::DineTrainResult trained = dinecap::dine_train(source, dcfg);
    if (progress != nullptr)
      for (const auto& p : trained.curve) progress(p.iteration, p.d_y, p.d_yx, p.estimate, user);

    json j;
    j["input"] = csv_path;
    j["rows"] = series.length();
    j["config"] = dinecap::config_to_json(cfg);
    j["failed"] = trained.failed;
    j["failure"] = trained.failure;
    auto r = make_result();
    r->curve_csv = curve_text(trained.curve);
    if (!trained.failed) {
      dinecap::Rng rng(cfg.train.seed, "di-estimate");
      dinecap::Rng eval_rng = rng.split("evaluation");
      const dinecap::DvValues v = dinecap::dine_estimate(trained.model, series, dcfg.seq_len,
                                                         trained.model.box, eval_rng);
      j["estimate"] = {{"nats", v.estimate()},
                       {"bits", v.estimate() / std::numbers::ln2},
                       {"d_y", v.d_y},
                       {"d_yx", v.d_yx}};
      r->estimate = v.estimate();
    } else {
      j["estimate"] = nullptr;
      r->ok = 0;
    }
    r->json = j.dump(2);
    *out = r.release();
  });
}

dinecap_status dinecap_grad_check(const char* selector, long hidden, long steps, long batch,
                                  unsigned long long seed, double tolerance, dinecap_result** out) {
  return guarded([&] {
    require(selector, "selector");
    require(out, "out");
    *out = nullptr;
    if (hidden <= 0 || steps <= 0 || batch <= 0)
      throw ConfigError("grad-check sizes must be positive");
    if (!(tolerance >= 0.0)) throw ConfigError("grad-check tolerance must be >= 0");
    dinecap::GradSuiteOptions opts;
    opts.hidden = hidden;
    opts.steps = steps;
    opts.batch = batch;
    opts.seed = seed;
    const dinecap::GradCheckReport report = dinecap::run_grad_suite(selector, opts);

    json blocks = json::array();
    for (const auto& b : report.blocks)
      blocks.push_back({{"name", b.name},
                        {"max_abs_error", b.max_abs_error},
                        {"max_rel_error", b.max_rel_error},
                        {"passed", b.max_rel_error < tolerance}});
    auto r = make_result();
    r->ok = report.passed(tolerance) ? 1 : 0;
    r->estimate = report.worst();
    r->json = json{{"selector", selector},
                   {"hidden", hidden},
                   {"steps", steps},
                   {"batch", batch},
                   {"seed", seed},
                   {"tolerance", tolerance},
                   {"worst_rel_error", report.worst()},
                   {"passed", r->ok == 1},
                   {"blocks", blocks}}
                  .dump(2);
    *out = r.release();
  });
}

dinecap_status dinecap_simulate(const char* config_json, const char* ndt_path, long length,
                                const char* csv_path) {
  return guarded([&] {
    require(csv_path, "csv_path");
    if (length <= 0) throw std::invalid_argument("simulate: length must be positive");
    const dinecap::RunConfig cfg = parse_config(config_json);
    cfg.channel.validate();
    const dinecap::Rng root(cfg.train.seed, "simulate");
    dinecap::Rng noise = root.split("input");
    dinecap::Rng chan = root.split("channel");
    auto channel = dinecap::make_channel(cfg.channel);

    dinecap::Series series;
    series.x.resize(length, 1);
    series.y.resize(length, 1);
    if (ndt_path == nullptr) {
      if (!(cfg.train.power > 0.0)) throw ConfigError("simulate: power must be positive");
      channel->reset(1);
      const double sd = std::sqrt(cfg.train.power);
      for (long t = 0; t < length; ++t) {
        dinecap::Mat x(1, 1);
        x(0, 0) = sd * noise.normal();
        series.x(t, 0) = x(0, 0);
        series.y(t, 0) = channel->step(x, chan)(0, 0);
      }
    } else {
      dinecap::NdtModel ndt = dinecap::NdtModel::load(ndt_path);
      // The power layer normalises across the batch, so the realization is
      // drawn alongside batch - 1 companions and only the first is kept.
      const dinecap::Rollout path =
          dinecap::rollout(ndt, *channel, cfg.train.batch, length, noise, chan);
      for (long t = 0; t < length; ++t) {
        series.x(t, 0) = path.x[static_cast<std::size_t>(t)](0, 0);
        series.y(t, 0) = path.y[static_cast<std::size_t>(t)](0, 0);
      }
    }
    std::ofstream os(csv_path);
    if (!os) throw IoError(std::string("cannot open ") + csv_path + " for writing");
    dinecap::write_trajectory_csv(os, series);
    if (!os) throw IoError(std::string("failed writing ") + csv_path);
  });
}

const char* dinecap_result_json(const dinecap_result* result) {
  return result != nullptr ? result->json.c_str() : "";
}

const char* dinecap_result_curve_csv(const dinecap_result* result) {
  return result != nullptr ? result->curve_csv.c_str() : "";
}

double dinecap_result_estimate(const dinecap_result* result) {
  return result != nullptr ? result->estimate : 0.0;
}

int dinecap_result_ok(const dinecap_result* result) { return result != nullptr ? result->ok : 0; }

void dinecap_result_free(dinecap_result* result) { delete result; }

}  // extern "C"
