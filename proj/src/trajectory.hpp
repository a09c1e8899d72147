#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace avtse {

inline constexpr double kFeetToMeters = 0.3048;
inline constexpr double kLeaderHeadway = std::numeric_limits<double>::infinity();

struct TrackPoint {
  double time = 0.0;   // s from study start
  double x = 0.0;      // m from road start
  int lane = 0;
  double speed = 0.0;  // m/s
  // Distance to the preceding vehicle in the same lane. Empty when unknown,
  // kLeaderHeadway when there is no preceding vehicle.
  std::optional<double> space_headway;

  bool has_finite_headway() const {
    return space_headway && *space_headway < kLeaderHeadway && *space_headway > 0.0;
  }
  bool operator==(const TrackPoint&) const = default;
};

struct VehicleTrack {
  std::string vehicle_id;
  std::vector<TrackPoint> points;

  double entry_time() const { return points.front().time; }
  double exit_time() const { return points.back().time; }
  bool operator==(const VehicleTrack&) const = default;
};

struct CellIndex {
  int h = 0;
  int s = 0;
  bool operator==(const CellIndex&) const = default;
};

// Uniform time-space discretisation shared by every lane.
struct Grid {
  double t_len = 0.0;
  double x_len = 0.0;
  int n_h = 90;
  int n_s = 60;
  std::vector<int> lanes;
  double lane_width = 3.7;

  double dt_h() const { return t_len / n_h; }
  double dx() const { return x_len / n_s; }
  double cell_area() const { return dt_h() * dx(); }

  // Throws BoundsError outside [0, t_len] x [0, x_len]; the upper edges map
  // onto the last interval / segment.
  CellIndex cell_of(double t, double x) const;
  // Position of `lane` in `lanes`, or -1.
  int lane_index(int lane) const;
  void validate() const;
  bool operator==(const Grid&) const = default;
};

struct UnitInfo {
  std::string source_units = "metric";
  double length_factor = 1.0;
  bool speed_derived = false;
  bool headway_derived = false;
  bool operator==(const UnitInfo&) const = default;
};

struct TrackSet {
  std::vector<VehicleTrack> tracks;
  Grid grid;
  UnitInfo units;
  double dt_data = 0.1;
  bool operator==(const TrackSet&) const = default;
};

enum class UnitMode { Metric, Feet };

struct ColumnSchema {
  std::string vehicle_id = "vehicle_id";
  std::string time = "time_s";
  std::string frame = "frame_id";
  std::string lane = "lane";
  std::string x = "x";
  std::string speed = "speed";
  std::string space_headway = "space_headway";

  static ColumnSchema standard() { return {}; }
  static ColumnSchema ngsim();
};

struct ParseOptions {
  ColumnSchema schema;
  UnitMode unit_mode = UnitMode::Metric;
  double dt_data = 0.1;
  // Subtracted from every timestamp; NaN means "use the earliest timestamp".
  double time_offset = 0.0;
  std::optional<double> t_len;
  std::optional<double> x_len;
  int n_h = 90;
  int n_s = 60;
  double lane_width = 3.7;
  std::vector<int> lanes;  // empty keeps every lane present in the data
};

TrackSet parse_trajectories(const std::string& path, const ParseOptions& opts);
TrackSet parse_trajectories_text(const std::string& csv_text, const ParseOptions& opts);

// Writes the standard schema (time_s column, SI units) at round-trip precision.
void write_trajectories(const TrackSet& ts, const std::string& path);
std::string format_trajectories(const TrackSet& ts);

// Assembles a TrackSet from raw (possibly unsorted, unclipped) tracks: builds
// the grid, clips to the road extent and study period, splits at gaps and
// fills missing speeds. Shared by the CSV reader and the synthetic generator.
TrackSet assemble_trackset(std::vector<VehicleTrack> raw, const ParseOptions& opts, UnitInfo units);

TrackSet derive_headways(const TrackSet& ts);

// Central differences in the interior, one-sided at the ends.
void fill_speeds_from_positions(VehicleTrack& track, double dt);

// Per-frame view of the road: every on-road point, grouped by lane and sorted
// by position. Frame k covers time k * dt.
class SnapshotIndex {
 public:
  struct Entry {
    int lane;
    double x;
    std::uint32_t track;
    std::uint32_t point;
  };

  explicit SnapshotIndex(const TrackSet& ts);

  std::int64_t frame_of(double t) const;
  std::int64_t first_frame() const { return first_; }
  std::int64_t last_frame() const { return first_ + static_cast<std::int64_t>(offsets_.size()) - 2; }
  std::span<const Entry> at(std::int64_t frame) const;
  // Entries of one lane at one frame (sorted by x).
  std::span<const Entry> lane_at(std::int64_t frame, int lane) const;

 private:
  double dt_;
  std::int64_t first_ = 0;
  std::vector<std::size_t> offsets_;
  std::vector<Entry> entries_;
};

struct Slowdown {
  double start = 0.0;     // s
  double duration = 0.0;  // s
  double speed = 0.0;     // m/s inside the zone while active
  double x_from = 0.0;    // m
  double x_to = 0.0;      // m
};

enum class HeadwayDistribution { Constant, ShiftedExponential };

struct SynthConfig {
  int lanes = 1;
  int vehicles_per_lane = 30;
  double free_speed = 10.0;  // m/s
  double spacing = 20.0;     // mean entry spacing at free speed, m
  HeadwayDistribution headway_dist = HeadwayDistribution::Constant;
  double road_length = 200.0;
  double duration = 80.0;
  int n_h = 8;
  int n_s = 20;
  double lane_width = 3.7;
  double dt = 0.1;
  // Newell car-following: wave travel time and jam spacing.
  double wave_time = 1.0;
  double jam_spacing = 7.0;
  std::optional<Slowdown> slowdown;
};

TrackSet synth_platoon(const SynthConfig& cfg, std::uint64_t seed);

}  // namespace avtse
