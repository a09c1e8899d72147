#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "config.hpp"
#include "datacenter.hpp"
#include "edie.hpp"
#include "metrics.hpp"
#include "regression.hpp"

namespace avtse {

// Matrix files: rows are segments, columns intervals, empty = masked.
std::string format_field(const CellField& f);
CellField parse_field(const std::string& text, int lane, Quantity q, int n_s, int n_h);
std::string field_path(const std::string& dir, int lane, Quantity q);
void write_fields(const std::string& dir, const std::vector<CellField>& fields);
std::vector<CellField> read_fields(const std::string& dir, const Grid& grid, Quantity q);

nlohmann::ordered_json grid_to_json(const Grid& g);
Grid grid_from_json(const nlohmann::ordered_json& j);
void write_grid(const std::string& dir, const Grid& g);
Grid read_grid(const std::string& dir);

struct DataBundle {
  TrackSet tracks;
  std::vector<LaneStates> truth;
};

TrackSet load_tracks(const ExperimentConfig& cfg);
DataBundle load_data(const ExperimentConfig& cfg);
FieldSet truth_fields(const std::vector<LaneStates>& truth);
void write_truth(const std::string& dir, const DataBundle& data);

DataCenterOptions datacenter_options(const ExperimentConfig& cfg);

// Runs the fleet and the data center; `avs` overrides hash-based selection.
// When `messages_path` is non-empty the message log is written as JSONL.
ObservationSet sense(const ExperimentConfig& cfg, const TrackSet& ts, std::uint64_t seed,
                     const std::set<std::string>* avs = nullptr, const std::string& messages_path = {},
                     std::size_t* n_avs = nullptr);

// Replays a JSONL message log through the data center.
ObservationSet observe_log(const ExperimentConfig& cfg, const Grid& grid, const std::string& messages_path);

void write_observation(const std::string& dir, const ObservationSet& obs);

struct Estimation {
  std::vector<CellField> density, speed, flow;
  std::vector<ImputeModel> density_models;
  SpeedEstimate speed_models;
  std::vector<std::string> warnings;
};

Estimation estimate(const ExperimentConfig& cfg, const ObservationSet& obs, std::uint64_t seed);
void write_estimation(const std::string& dir, const Estimation& est, const Grid& grid);
nlohmann::ordered_json estimation_json(const Estimation& est);

struct SeedRun {
  std::uint64_t seed = 0;
  std::size_t n_avs = 0;
  EvalReport report;
};

struct PipelineResult {
  EvalReport aggregate;
  std::vector<SeedRun> runs;
};

// `data` may carry preloaded tracks and truth; `write` toggles artifact files.
PipelineResult run_pipeline(const ExperimentConfig& cfg, const DataBundle* data = nullptr, bool write = true);

// Report JSON without wall-clock fields, for reproducibility checks.
nlohmann::ordered_json deterministic_view(const EvalReport& r);

struct SweepSpec {
  std::string parameter;
  std::vector<std::string> values;
};

// Config key a sweep parameter maps to.
std::string sweep_key(const std::string& parameter);

struct SweepResult {
  std::string table;     // CSV, one row per successful (value, seed)
  std::string failures;  // CSV of failed points
  std::size_t rows = 0;
  std::size_t failed = 0;
};

SweepResult run_sweep(const ExperimentConfig& base, const SweepSpec& spec, const DataBundle* data = nullptr);

struct PlatoonResult {
  EvalReport dedicated;
  EvalReport uniform;
  std::size_t av_count = 0;
};

PlatoonResult run_platoon(const ExperimentConfig& cfg, const std::vector<int>& dedicated_lanes,
                          const DataBundle* data = nullptr, bool write = true);

}  // namespace avtse
