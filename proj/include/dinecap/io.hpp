// SPDX-License-Identifier: Apache-2.0
//
// File formats: trajectory CSV, curve CSV, run configuration and report JSON.
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "dinecap/capest.hpp"
#include "dinecap/dine.hpp"

namespace dinecap {

/// Header `x0..x{dx-1},y0..y{dy-1}`, one time step per row.
Series read_trajectory_csv(std::istream& in);
Series read_trajectory_csv_file(const std::string& path);
void write_trajectory_csv(std::ostream& out, const Series& series);

/// Header `iteration,dY,dYX,estimate`.
void write_curve_csv(std::ostream& out, const std::vector<CurvePoint>& curve);
std::vector<CurvePoint> read_curve_csv(std::istream& in);

/// Everything a CLI run needs: channel, training/evaluation settings, output
/// location and DINE-only window sampling.
struct RunConfig {
  ChannelSpec channel{};
  TrainConfig train{};
  WindowSampling sampling = WindowSampling::kDisjointBlocks;
  std::string output_dir = ".";
};

/// Applies the keys of `j` on top of `base`. Unknown keys and invalid values
/// raise ConfigError.
RunConfig apply_config(const nlohmann::json& j, RunConfig base = {});
nlohmann::json config_to_json(const RunConfig& config);

DineTrainConfig dine_config_from(const RunConfig& config);

nlohmann::json report_to_json(const EstimateReport& report);

}  // namespace dinecap
