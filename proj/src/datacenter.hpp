#pragma once

#include <Eigen/Core>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "edie.hpp"
#include "fleet.hpp"

namespace avtse {

using CoverageMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;  // n_S x n_H

struct MergedRecord {
  int lane = 0;
  double x = 0.0;
  std::optional<double> speed;
  Source source = Source::D2;
  int multiplicity = 1;
};

// Single-linkage merge per lane: consecutive records (ascending x) closer than
// `tol` join one cluster. A cluster holding a self report takes its position
// and speed verbatim; otherwise position and speed are cluster means.
std::vector<MergedRecord> deduplicate(std::span<const DetectionRecord> records, double tol);
std::vector<MergedRecord> deduplicate(std::span<const MergedRecord> records, double tol);

// Covered length of [lo, hi] by the union of `intervals` (assumed on one lane).
double covered_length(std::span<const CoverageInterval> intervals, double lo, double hi);

struct ObservationLane {
  int lane = 0;
  CoverageMask o_d1;
  CoverageMask o_d2;
  CellField k_obs;
  CellField v_obs;
};

struct ObservationDiagnostics {
  std::size_t instants = 0;
  std::size_t messages = 0;
  std::size_t records_in = 0;
  std::size_t records_merged = 0;
  std::size_t d1_zero_denominator = 0;
  std::size_t speed_floored = 0;  // zero speeds raised to the floor inside harmonic means
  std::size_t speed_clipped = 0;  // observed cell speeds clipped into the plausible range
};

struct SnapshotRecord {
  int lane;
  int s;
  double time;
  std::vector<MergedRecord> vehicles;
};

struct ObservationSet {
  Perception level = Perception::S3;
  Grid grid;
  std::vector<ObservationLane> lanes;
  ObservationDiagnostics diagnostics;
  std::vector<SnapshotRecord> snapshots;  // only when requested
};

struct DataCenterOptions {
  Perception level = Perception::S3;
  double dedup_tolerance = 2.0;  // m
  double epsilon = 0.05;
  double lrr_range = 150.0;  // m
  bool rear_lrr = false;
  bool keep_snapshots = false;
  double speed_floor = 0.1;  // m/s
  double speed_cap = 60.0;   // m/s
};

// Batch aggregation of a message log into directly observed cell states.
class DataCenter {
 public:
  DataCenter(const Grid& grid, DataCenterOptions opts);

  // All messages of one sampling instant.
  void ingest(double time, std::span<const Message> batch);
  ObservationSet finalize();

  const Grid& grid() const { return grid_; }

 private:
  struct AvSample {
    double t;
    int lane;
    double x;
    double speed;
    double front;                 // upper edge of the forward band
    std::optional<double> rear_x;  // follower position when rear LRR reports one
  };
  struct LaneAccum {
    CoverageMask o_d1, o_d2;
    Eigen::MatrixXd density_sum, hmean_sum;
    Eigen::MatrixXi density_n, hmean_n;
  };

  void process_instant(double time, std::span<const Message> batch);

  Grid grid_;
  DataCenterOptions opts_;
  std::vector<LaneAccum> accum_;
  std::map<std::string, std::vector<AvSample>> av_samples_;
  ObservationDiagnostics diag_;
  std::vector<SnapshotRecord> snapshots_;
  double sample_period_ = 0.0;
  double last_time_ = -1.0;
};

// Convenience wrappers over DataCenter for an in-memory message log.
ObservationSet observe(std::span<const Message> messages, const Grid& grid, const DataCenterOptions& opts);
ObservationSet observe_s1(std::span<const Message> messages, const Grid& grid, DataCenterOptions opts = {});
ObservationSet observe_s2(std::span<const Message> messages, const Grid& grid, DataCenterOptions opts = {});
ObservationSet observe_s3(std::span<const Message> messages, const Grid& grid, DataCenterOptions opts = {});

struct CoverageSets {
  std::vector<CoverageMask> o_d1, o_d2;  // per lane of the grid
};
CoverageSets coverage_sets(std::span<const Message> messages, const Grid& grid, double epsilon);

}  // namespace avtse
