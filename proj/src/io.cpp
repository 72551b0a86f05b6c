// SPDX-License-Identifier: Apache-2.0
#include "dinecap/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "dinecap/errors.hpp"

namespace dinecap {
namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

double parse_double(const std::string& text, std::size_t row, std::size_t col) {
  const std::string t = trim(text);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw ParseError("row " + std::to_string(row) + ", column " + std::to_string(col + 1) +
                     ": not a number: '" + t + "'");
  return v;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

Series read_trajectory_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || trim(line).empty()) throw ParseError("row 1: empty file or missing header");
  const auto header = split_csv(trim(line));
  Index dx = 0;
  Index dy = 0;
  for (const auto& raw : header) {
    const std::string h = trim(raw);
    const bool is_x = !h.empty() && h[0] == 'x';
    const bool is_y = !h.empty() && h[0] == 'y';
    const std::string expect = is_x ? "x" + std::to_string(dx) : "y" + std::to_string(dy);
    if ((!is_x && !is_y) || h != expect || (is_x && dy > 0))
      throw ParseError("row 1: header must be x0..x{dx-1},y0..y{dy-1}; got '" + h + "'");
    (is_x ? dx : dy) += 1;
  }
  if (dx == 0 || dy == 0) throw ParseError("row 1: header needs at least one x and one y column");

  std::vector<double> values;
  std::size_t row = 1;
  Index rows = 0;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto cells = split_csv(trim(line));
    if (static_cast<Index>(cells.size()) != dx + dy)
      throw ParseError("row " + std::to_string(row) + ": expected " + std::to_string(dx + dy) +
                       " fields, got " + std::to_string(cells.size()));
    for (std::size_t c = 0; c < cells.size(); ++c) values.push_back(parse_double(cells[c], row, c));
    ++rows;
  }
  if (rows == 0) throw ParseError("row 2: no data rows");
  Series s;
  s.x.resize(rows, dx);
  s.y.resize(rows, dy);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < dx; ++c) s.x(r, c) = values[static_cast<std::size_t>(r * (dx + dy) + c)];
    for (Index c = 0; c < dy; ++c) s.y(r, c) = values[static_cast<std::size_t>(r * (dx + dy) + dx + c)];
  }
  return s;
}

Series read_trajectory_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  return read_trajectory_csv(in);
}

void write_trajectory_csv(std::ostream& out, const Series& series) {
  for (Index c = 0; c < series.x.cols(); ++c) out << (c ? "," : "") << 'x' << c;
  for (Index c = 0; c < series.y.cols(); ++c) out << ",y" << c;
  out << '\n';
  for (Index r = 0; r < series.length(); ++r) {
    for (Index c = 0; c < series.x.cols(); ++c) out << (c ? "," : "") << fmt(series.x(r, c));
    for (Index c = 0; c < series.y.cols(); ++c) out << ',' << fmt(series.y(r, c));
    out << '\n';
  }
}

void write_curve_csv(std::ostream& out, const std::vector<CurvePoint>& curve) {
  out << "iteration,dY,dYX,estimate\n";
  for (const auto& p : curve)
    out << p.iteration << ',' << fmt(p.d_y) << ',' << fmt(p.d_yx) << ',' << fmt(p.estimate) << '\n';
}

std::vector<CurvePoint> read_curve_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != "iteration,dY,dYX,estimate")
    throw ParseError("row 1: expected curve header iteration,dY,dYX,estimate");
  std::vector<CurvePoint> out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto cells = split_csv(trim(line));
    if (cells.size() != 4) throw ParseError("row " + std::to_string(row) + ": expected 4 fields");
    out.push_back({static_cast<long>(parse_double(cells[0], row, 0)), parse_double(cells[1], row, 1),
                   parse_double(cells[2], row, 2), parse_double(cells[3], row, 3)});
  }
  return out;
}

// ---------------------------------------------------------------- configuration

RunConfig apply_config(const nlohmann::json& j, RunConfig base) {
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  RunConfig c = std::move(base);
  TrainConfig& t = c.train;
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "family") c.channel.family = parse_family(v.get<std::string>());
      else if (key == "alpha") c.channel.alpha = v.get<double>();
      else if (key == "sigma2") c.channel.sigma2 = v.get<double>();
      else if (key == "power") t.power = v.get<double>();
      else if (key == "feedback") t.feedback = v.get<bool>();
      else if (key == "batch") t.batch = v.get<Index>();
      else if (key == "seq_len") t.seq_len = v.get<Index>();
      else if (key == "dine_lr") t.dine_lr = v.get<double>();
      else if (key == "ndt_lr") t.ndt_lr = v.get<double>();
      else if (key == "iterations") t.iterations = v.get<long>();
      else if (key == "dine_steps_per_ndt") t.dine_steps_per_ndt = v.get<long>();
      else if (key == "warmup") t.warmup = v.get<long>();
      else if (key == "eval_samples") t.eval_samples = v.get<long>();
      else if (key == "seed") t.seed = v.get<std::uint64_t>();
      else if (key == "dine_hidden") t.dine_hidden = v.get<Index>();
      else if (key == "dine_head") t.dine_head = v.get<std::vector<Index>>();
      else if (key == "ndt_hidden") t.ndt_hidden = v.get<Index>();
      else if (key == "ndt_head") t.ndt_head = v.get<std::vector<Index>>();
      else if (key == "margin") t.margin = v.get<double>();
      else if (key == "reference_floor") t.reference_floor = v.get<double>();
      else if (key == "clip_norm") t.clip_norm = v.get<double>();
      else if (key == "ema_denominator") t.ema_denominator = v.get<bool>();
      else if (key == "output_dir") c.output_dir = v.get<std::string>();
      else if (key == "window_sampling") {
        const auto s = v.get<std::string>();
        if (s == "disjoint") c.sampling = WindowSampling::kDisjointBlocks;
        else if (s == "random") c.sampling = WindowSampling::kRandomStarts;
        else throw ConfigError("window_sampling must be 'disjoint' or 'random'");
      } else {
        throw ConfigError("unknown configuration key '" + key + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("configuration key '" + key + "': " + e.what());
    }
  }
  c.channel.validate();
  t.validate();
  return c;
}

nlohmann::json config_to_json(const RunConfig& c) {
  const TrainConfig& t = c.train;
  nlohmann::json j;
  j["family"] = c.channel.family_name();
  j["alpha"] = c.channel.alpha;
  j["sigma2"] = c.channel.sigma2;
  j["power"] = t.power;
  j["feedback"] = t.feedback;
  j["batch"] = t.batch;
  j["seq_len"] = t.seq_len;
  j["dine_lr"] = t.dine_lr;
  j["ndt_lr"] = t.ndt_lr;
  j["iterations"] = t.iterations;
  j["dine_steps_per_ndt"] = t.dine_steps_per_ndt;
  j["warmup"] = t.warmup;
  j["eval_samples"] = t.eval_samples;
  j["seed"] = t.seed;
  j["dine_hidden"] = t.dine_hidden;
  j["dine_head"] = t.dine_head;
  j["ndt_hidden"] = t.ndt_hidden;
  j["ndt_head"] = t.ndt_head;
  j["margin"] = t.margin;
  j["reference_floor"] = t.reference_floor;
  j["clip_norm"] = t.clip_norm;
  j["ema_denominator"] = t.ema_denominator;
  j["window_sampling"] = c.sampling == WindowSampling::kDisjointBlocks ? "disjoint" : "random";
  j["output_dir"] = c.output_dir;
  return j;
}

DineTrainConfig dine_config_from(const RunConfig& c) {
  DineTrainConfig d;
  d.arch.hidden = c.train.dine_hidden;
  d.arch.head = c.train.dine_head;
  d.batch = c.train.batch;
  d.seq_len = c.train.seq_len;
  d.iterations = c.train.iterations;
  d.seed = c.train.seed;
  d.options.adam.learning_rate = c.train.dine_lr;
  d.options.adam.clip_norm = c.train.clip_norm;
  d.options.margin = c.train.margin;
  d.options.floor = c.train.reference_floor;
  d.options.ema_denominator = c.train.ema_denominator;
  return d;
}

nlohmann::json report_to_json(const EstimateReport& r) {
  RunConfig echo;
  echo.channel = r.channel;
  echo.train = r.config;
  nlohmann::json cfg = config_to_json(echo);
  cfg.erase("output_dir");
  cfg.erase("window_sampling");

  nlohmann::json j;
  j["channel"] = {{"family", r.channel.family_name()}, {"alpha", r.channel.alpha}, {"sigma2", r.channel.sigma2}};
  j["config"] = cfg;
  j["estimate"] = {{"nats", r.estimate_nats},
                   {"bits", r.estimate_bits()},
                   {"raw_nats", r.raw_estimate_nats},
                   {"d_y", r.d_y},
                   {"d_yx", r.d_yx}};
  j["realized_power"] = r.realized_power;
  j["eval_samples"] = r.eval_samples;
  if (r.baseline) {
    j["baseline"] = {{"kind", r.baseline->kind},
                     {"nats", r.baseline->nats},
                     {"bits", r.baseline->nats / std::numbers::ln2},
                     {"trusted", r.baseline->trusted}};
    j["baseline"]["relative_error"] = r.relative_error ? nlohmann::json(*r.relative_error) : nlohmann::json();
  } else {
    j["baseline"] = nullptr;
  }
  j["curve_summary"] = {{"window", r.summary.window},
                        {"peak", r.summary.peak},
                        {"final_mean", r.summary.final_mean},
                        {"ratio", r.summary.ratio},
                        {"points", r.curve.size()}};
  j["failed"] = r.failed;
  j["failure"] = r.failure;
  j["timing"] = {{"wall_seconds", r.wall_seconds}};
  return j;
}

}  // namespace dinecap
