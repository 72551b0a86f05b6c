// SPDX-License-Identifier: Apache-2.0
//
// dinecap command-line front end. Talks to the library only through the C API.
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dinecap/dinecap.h"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct RunError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Owns a dinecap_result handle.
class Result {
 public:
  Result() = default;
  Result(const Result&) = delete;
  Result& operator=(const Result&) = delete;
  ~Result() { dinecap_result_free(ptr_); }
  dinecap_result** out() { return &ptr_; }
  const dinecap_result* get() const { return ptr_; }
  json parsed() const { return json::parse(dinecap_result_json(ptr_)); }

 private:
  dinecap_result* ptr_ = nullptr;
};

void check(dinecap_status status) {
  if (status == DINECAP_OK) return;
  const std::string msg =
      std::string(dinecap_status_string(status)) + ": " + dinecap_last_error();
  if (status == DINECAP_ERR_CONFIG || status == DINECAP_ERR_INVALID_ARGUMENT) throw UsageError(msg);
  throw RunError(msg);
}

// Flags shared by the subcommands that build a configuration.
struct Common {
  std::string config_path;
  std::string output_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> family;
  std::optional<double> alpha;
  std::optional<double> sigma2;
  std::optional<double> power;
  bool feedback = false;
  std::optional<long> iterations;
  std::optional<long> eval_samples;
  std::optional<long> warmup;
  std::optional<long> batch;
  std::optional<long> seq_len;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c, bool channel_flags) {
  cmd->add_option("--config", c.config_path, "JSON configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--output-dir", c.output_dir,
                  "Directory for output files (default: $DINECAP_OUTPUT_DIR, then the config, then .)");
  cmd->add_option("--seed", c.seed, "Random seed");
  cmd->add_option("--iterations", c.iterations, "Training iterations (alternations for capacity)");
  cmd->add_option("--batch", c.batch, "Sequences per batch");
  cmd->add_option("--seq-len", c.seq_len, "Sequence length");
  cmd->add_flag("--quiet,-q", c.quiet, "Suppress progress output");
  if (channel_flags) {
    cmd->add_option("--family", c.family, "Channel family")
        ->check(CLI::IsMember({"awgn", "ma1"}));
    cmd->add_option("--alpha", c.alpha, "MA(1) noise coefficient");
    cmd->add_option("--sigma2", c.sigma2, "AWGN noise variance");
    cmd->add_flag("--feedback", c.feedback, "Enable output feedback to the input generator");
    cmd->add_option("--eval-samples", c.eval_samples, "Monte-Carlo evaluation samples");
    cmd->add_option("--warmup", c.warmup, "DINE-only warm-up steps");
  }
}

json load_config(const Common& c) {
  json j = json::object();
  if (!c.config_path.empty()) {
    std::ifstream in(c.config_path);
    if (!in) throw UsageError("cannot read config " + c.config_path);
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw UsageError("config " + c.config_path + " is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw UsageError("config " + c.config_path + " must be a JSON object");
  }
  if (c.seed) j["seed"] = *c.seed;
  if (c.family) j["family"] = *c.family;
  if (c.alpha) j["alpha"] = *c.alpha;
  if (c.sigma2) j["sigma2"] = *c.sigma2;
  if (c.power) j["power"] = *c.power;
  if (c.feedback) j["feedback"] = true;
  if (c.iterations) j["iterations"] = *c.iterations;
  if (c.eval_samples) j["eval_samples"] = *c.eval_samples;
  if (c.warmup) j["warmup"] = *c.warmup;
  if (c.batch) j["batch"] = *c.batch;
  if (c.seq_len) j["seq_len"] = *c.seq_len;
  if (!c.output_dir.empty()) {
    j["output_dir"] = c.output_dir;
  } else if (const char* env = std::getenv("DINECAP_OUTPUT_DIR"); env != nullptr && *env != '\0') {
    if (!j.contains("output_dir")) j["output_dir"] = env;
  }
  return j;
}

// Validated, fully populated configuration.
json resolve(const json& partial) {
  Result r;
  check(dinecap_check_config(partial.dump().c_str(), r.out()));
  return r.parsed();
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

std::string stem(const std::string& prefix, const json& cfg) {
  return prefix + "_" + cfg["family"].get<std::string>() + "_a" + num(cfg["alpha"].get<double>()) +
         "_p" + num(cfg["power"].get<double>()) + "_fb" + (cfg["feedback"].get<bool>() ? "1" : "0") +
         "_s" + std::to_string(cfg["seed"].get<std::uint64_t>());
}

fs::path output_dir(const json& cfg) {
  fs::path dir = cfg.value("output_dir", std::string("."));
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw RunError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw RunError("cannot write " + path.string());
  out << text;
  if (!out) throw RunError("failed writing " + path.string());
}

struct ProgressState {
  long every;
  bool quiet;
};

void print_progress(long it, double d_y, double d_yx, double est, void* user) {
  const auto* st = static_cast<const ProgressState*>(user);
  if (st->quiet || it % st->every != 0) return;
  std::fprintf(stderr, "  iter %6ld  dY %.4f  dYX %.4f  estimate %.4f nats\n", it, d_y, d_yx, est);
}

void print_estimate(const char* label, double nats) {
  std::printf("%s: %.6f nats (%.6f bits)\n", label, nats, nats / std::log(2.0));
}

// ---------------------------------------------------------------- capacity

struct CapacityRun {
  json report;
  std::string curve_csv;
};

CapacityRun run_capacity(const json& cfg, const fs::path& dir, bool quiet) {
  const std::string base = stem("capacity", cfg);
  const fs::path ndt_path = dir / (base + "_ndt.bin");
  ProgressState ps{std::max(1L, cfg["iterations"].get<long>() / 20), quiet};
  Result r;
  check(dinecap_capacity(cfg.dump().c_str(), ndt_path.string().c_str(), print_progress, &ps, r.out()));
  CapacityRun run{r.parsed(), dinecap_result_curve_csv(r.get())};
  write_file(dir / (base + ".json"), run.report.dump(2) + "\n");
  write_file(dir / (base + "_curve.csv"), run.curve_csv);
  return run;
}

int cmd_capacity(Common& c) {
  if (!c.power) throw UsageError("--power is required");
  const json cfg = resolve(load_config(c));
  const fs::path dir = output_dir(cfg);
  const CapacityRun run = run_capacity(cfg, dir, c.quiet);
  const json& rep = run.report;
  if (rep["failed"].get<bool>()) {
    std::fprintf(stderr, "capacity run failed: %s\n", rep["failure"].get<std::string>().c_str());
    return kExitFailure;
  }
  print_estimate("capacity estimate", rep["estimate"]["nats"].get<double>());
  if (rep["baseline"].is_object()) {
    const auto& b = rep["baseline"];
    print_estimate(("analytic " + b["kind"].get<std::string>()).c_str(), b["nats"].get<double>());
    if (!b["trusted"].get<bool>()) std::printf("warning: analytic baseline failed its validation gate\n");
  }
  std::printf("realized power: %.6f\n", rep["realized_power"].get<double>());
  std::printf("report: %s\n", (dir / (stem("capacity", cfg) + ".json")).string().c_str());
  return kExitOk;
}

// ---------------------------------------------------------------- sweep

int cmd_sweep(Common& c, const std::vector<double>& powers) {
  if (powers.empty()) throw UsageError("--powers needs at least one value");
  for (double p : powers)
    if (!(p > 0.0) || !std::isfinite(p)) throw UsageError("powers must be positive");
  json partial = load_config(c);
  partial["power"] = powers.front();
  const json first = resolve(partial);
  const fs::path dir = output_dir(first);

  std::ostringstream table;
  table << "power,estimate_nats,estimate_bits,baseline_nats,relative_error,realized_power,failed\n";
  int failures = 0;
  for (double p : powers) {
    partial["power"] = p;
    const json cfg = resolve(partial);
    if (!c.quiet) std::fprintf(stderr, "power %g\n", p);
    char row[256];
    try {
      const CapacityRun run = run_capacity(cfg, dir, c.quiet);
      const json& rep = run.report;
      const bool failed = rep["failed"].get<bool>();
      failures += failed ? 1 : 0;
      const double est = rep["estimate"]["nats"].get<double>();
      const double base = rep["baseline"].is_object() ? rep["baseline"]["nats"].get<double>() : NAN;
      const double rel = rep["baseline"].is_object() && rep["baseline"]["relative_error"].is_number()
                             ? rep["baseline"]["relative_error"].get<double>()
                             : NAN;
      std::snprintf(row, sizeof(row), "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n", p, est,
                    est / std::log(2.0), base, rel, rep["realized_power"].get<double>(), failed ? 1 : 0);
      std::printf("P=%g: %.6f nats (%.6f bits), analytic %.6f nats%s\n", p, est, est / std::log(2.0), base,
                  failed ? " [failed]" : "");
    } catch (const RunError& e) {
      ++failures;
      std::fprintf(stderr, "power %g failed: %s\n", p, e.what());
      std::snprintf(row, sizeof(row), "%.17g,nan,nan,nan,nan,nan,1\n", p);
    }
    table << row;
  }
  const fs::path out = dir / ("sweep_" + first["family"].get<std::string>() + "_a" +
                              num(first["alpha"].get<double>()) + "_fb" +
                              (first["feedback"].get<bool>() ? "1" : "0") + "_s" +
                              std::to_string(first["seed"].get<std::uint64_t>()) + ".csv");
  write_file(out, table.str());
  std::printf("table: %s\n", out.string().c_str());
  return failures == 0 ? kExitOk : kExitFailure;
}

// ---------------------------------------------------------------- di-estimate

int cmd_di_estimate(Common& c, const std::string& csv) {
  const json cfg = resolve(load_config(c));
  const fs::path dir = output_dir(cfg);
  ProgressState ps{std::max(1L, cfg["iterations"].get<long>() / 20), c.quiet};
  Result r;
  check(dinecap_di_estimate(csv.c_str(), cfg.dump().c_str(), print_progress, &ps, r.out()));
  const json rep = r.parsed();
  const std::string base = "di_" + fs::path(csv).stem().string() + "_s" +
                           std::to_string(cfg["seed"].get<std::uint64_t>());
  write_file(dir / (base + ".json"), rep.dump(2) + "\n");
  write_file(dir / (base + "_curve.csv"), dinecap_result_curve_csv(r.get()));
  if (!dinecap_result_ok(r.get())) {
    std::fprintf(stderr, "training failed: %s\n", rep["failure"].get<std::string>().c_str());
    return kExitFailure;
  }
  print_estimate("directed information rate", dinecap_result_estimate(r.get()));
  std::printf("report: %s\n", (dir / (base + ".json")).string().c_str());
  return kExitOk;
}

// ---------------------------------------------------------------- baseline

int cmd_baseline(Common& c) {
  if (!c.power) throw UsageError("--power is required");
  const json cfg = resolve(load_config(c));
  Result r;
  check(dinecap_baseline(cfg.dump().c_str(), r.out()));
  std::printf("%s\n", r.parsed().dump(2).c_str());
  return kExitOk;
}

// ---------------------------------------------------------------- grad-check

int cmd_grad_check(const std::string& selector, long hidden, long steps, long batch,
                   std::uint64_t seed, double tol, bool quiet) {
  Result r;
  check(dinecap_grad_check(selector.c_str(), hidden, steps, batch, seed, tol, r.out()));
  const json rep = r.parsed();
  if (!quiet) {
    for (const auto& b : rep["blocks"])
      std::printf("  %-28s rel %.3e  abs %.3e  %s\n", b["name"].get<std::string>().c_str(),
                  b["max_rel_error"].get<double>(), b["max_abs_error"].get<double>(),
                  b["passed"].get<bool>() ? "ok" : "FAIL");
  }
  const bool ok = dinecap_result_ok(r.get()) != 0;
  std::printf("grad-check %s: worst relative error %.3e (tolerance %g) %s\n", selector.c_str(),
              rep["worst_rel_error"].get<double>(), tol, ok ? "PASS" : "FAIL");
  return ok ? kExitOk : kExitFailure;
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(Common& c, long length, const std::string& ndt, const std::string& out) {
  if (!c.power && ndt.empty()) throw UsageError("--power is required without --ndt");
  const json cfg = resolve(load_config(c));
  fs::path path = out;
  if (path.is_relative() && !c.output_dir.empty()) path = output_dir(cfg) / path;
  check(dinecap_simulate(cfg.dump().c_str(), ndt.empty() ? nullptr : ndt.c_str(), length,
                         path.string().c_str()));
  std::printf("wrote %ld channel uses to %s\n", length, path.string().c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Directed-information neural estimation and channel capacity estimation"};
  app.set_version_flag("--version", std::string(dinecap_version()));
  app.require_subcommand(1);

  Common common;

  auto* capacity = app.add_subcommand("capacity", "Estimate channel capacity by alternating DINE/NDT training");
  add_common(capacity, common, true);
  capacity->add_option("--power", common.power, "Average input power budget");

  auto* sweep = app.add_subcommand("sweep", "Run capacity estimation for a list of power budgets");
  add_common(sweep, common, true);
  std::vector<double> powers;
  sweep->add_option("--powers", powers, "Power budgets, comma separated")->delimiter(',')->required();

  auto* di = app.add_subcommand("di-estimate", "Estimate the directed information rate of a trajectory CSV");
  add_common(di, common, false);
  std::string csv;
  di->add_option("csv", csv, "Trajectory CSV (header x0..,y0..)")->required();

  auto* baseline = app.add_subcommand("baseline", "Analytic capacity of a channel");
  add_common(baseline, common, true);
  baseline->add_option("--power", common.power, "Average input power budget");

  auto* grad = app.add_subcommand("grad-check", "Finite-difference gradient verification");
  std::string selector;
  long hidden = 4, steps = 5, gbatch = 3;
  std::uint64_t gseed = 7;
  double tol = 1e-4;
  bool gquiet = false;
  grad->add_option("selector", selector, "Component: nn, dine, ndt or rollout")
      ->required()
      ->check(CLI::IsMember({"nn", "dine", "ndt", "rollout"}));
  grad->add_option("--hidden", hidden, "Hidden width")->capture_default_str();
  grad->add_option("--steps", steps, "Sequence length")->capture_default_str();
  grad->add_option("--batch", gbatch, "Batch size")->capture_default_str();
  grad->add_option("--seed", gseed, "Random seed")->capture_default_str();
  grad->add_option("--tolerance", tol, "Maximum relative error")->capture_default_str();
  grad->add_flag("--quiet,-q", gquiet, "Only print the summary line");

  auto* sim = app.add_subcommand("simulate", "Write a channel realization as trajectory CSV");
  add_common(sim, common, true);
  sim->add_option("--power", common.power, "Input power for i.i.d. Gaussian inputs");
  long length = 100000;
  std::string ndt_path;
  std::string out_csv;
  sim->add_option("--length", length, "Channel uses")->capture_default_str();
  sim->add_option("--ndt", ndt_path, "Saved input generator (default: i.i.d. Gaussian inputs)")
      ->check(CLI::ExistingFile);
  sim->add_option("--out,-o", out_csv, "Output CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*capacity) return cmd_capacity(common);
    if (*sweep) return cmd_sweep(common, powers);
    if (*di) return cmd_di_estimate(common, csv);
    if (*baseline) return cmd_baseline(common);
    if (*grad) return cmd_grad_check(selector, hidden, steps, gbatch, gseed, tol, gquiet);
    if (*sim) return cmd_simulate(common, length, ndt_path, out_csv);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
  return kExitUsage;
}
