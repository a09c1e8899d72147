#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "fleet.hpp"
#include "imputation.hpp"
#include "regression.hpp"
#include "trajectory.hpp"

namespace avtse {

struct DataConfig {
  std::string source = "synthetic";  // synthetic | csv
  std::string path;
  std::string schema = "standard";   // standard | ngsim
  UnitMode unit_mode = UnitMode::Metric;
  double dt = 0.1;
  std::optional<double> time_offset;  // unset = earliest timestamp
  std::optional<double> t_len, x_len;
  std::vector<int> lanes;
};

struct ExperimentConfig {
  DataConfig data;
  SynthConfig synthetic;
  std::uint64_t synthetic_seed = 1;
  int n_h = 90;
  int n_s = 60;
  double lane_width = 3.7;
  SensorConfig sensor;  // carries the perception level
  double penetration = 0.05;
  ImputeMethod density_method = ImputeMethod::SI;
  SpeedMethod speed_method = SpeedMethod::LR2;
  double dedup_tolerance = 2.0;
  double epsilon = 0.05;
  std::vector<std::uint64_t> seeds{1};
  std::string output_dir = "out";

  ExperimentConfig();

  // Dotted keys, e.g. "experiment.penetration", "sensor.lidar_range".
  void set(const std::string& key, const std::string& value);
  void validate() const;
  nlohmann::ordered_json to_json() const;
};

// Three-lane road with a temporary bottleneck; the default synthetic scenario.
SynthConfig congested_scenario();

ExperimentConfig parse_config_toml(const std::string& text);
ExperimentConfig load_config_toml(const std::string& path);
// Inverse of ExperimentConfig::to_json.
ExperimentConfig config_from_json(const nlohmann::ordered_json& j);
// "key=value"
void apply_override(ExperimentConfig& cfg, const std::string& assignment);

}  // namespace avtse
