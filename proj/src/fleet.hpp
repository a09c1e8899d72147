#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "rng.hpp"
#include "trajectory.hpp"

namespace avtse {

enum class Perception { S1 = 1, S2 = 2, S3 = 3 };
const char* perception_name(Perception p);
Perception parse_perception(const std::string& s);

struct SensorConfig {
  double lrr_range = 150.0;   // m
  double lidar_range = 50.0;  // m
  double missing_rate = 0.05;
  double speed_noise = 0.0;   // relative, detected speed = v * (1 + U(-xi, xi))
  double sampling_rate = 1.0; // Hz
  Perception perception = Perception::S3;
  double lane_width = 3.7;    // m
  bool rear_lrr = false;

  void validate(double dt_data) const;
};

enum class Source { Self, D1, D1Rear, D2 };
const char* source_name(Source s);
Source parse_source(const std::string& s);

struct DetectionRecord {
  std::string reporter_id;
  std::string target_id;  // simulation bookkeeping only; never transmitted
  double time = 0.0;
  int lane = 0;
  double x = 0.0;
  std::optional<double> speed;
  Source source = Source::D2;
};

// Longitudinal stretch of one lane swept by one sensor of one AV.
struct CoverageInterval {
  Source sensor = Source::D1;
  int lane = 0;
  double lo = 0.0;
  double hi = 0.0;
};

struct Message {
  std::string reporter_id;
  double time = 0.0;
  std::vector<CoverageInterval> coverage;
  std::vector<DetectionRecord> payload;
};

// AV iff hash(seed, vehicle_id) < penetration; nested in penetration.
std::set<std::string> select_avs(const TrackSet& ts, double penetration, std::uint64_t seed);

// Per-instant sensing context shared by the detectors.
struct SensingFrame {
  const TrackSet& ts;
  const SnapshotIndex& index;
  const SensorConfig& cfg;
  std::int64_t frame;
};

struct D1Result {
  CoverageInterval interval;
  std::optional<DetectionRecord> record;
};

// `rng_noise` may be null when speed_noise is zero.
D1Result d1_detect(const VehicleTrack& av, const SensingFrame& sf, Rng* rng_noise);
// Rear-facing variant: nearest follower within lrr_range.
D1Result d1_rear_detect(const VehicleTrack& av, const SensingFrame& sf, Rng* rng_noise);

struct D2Result {
  std::vector<CoverageInterval> intervals;
  std::vector<DetectionRecord> records;
};

// `exclude` lists targets already reported by the same AV at this instant.
D2Result d2_detect(const VehicleTrack& av, const SensingFrame& sf, Rng& rng_dropout, Rng* rng_noise,
                   std::span<const std::string> exclude = {});

// Emits one batch per sampling instant (messages ordered by reporter id).
void emit_messages(const TrackSet& ts, const std::set<std::string>& avs, const SensorConfig& cfg, std::uint64_t seed,
                   const std::function<void(double time, std::vector<Message>&&)>& sink);

std::vector<Message> emit_messages(const TrackSet& ts, const std::set<std::string>& avs, const SensorConfig& cfg,
                                   std::uint64_t seed);

std::string message_to_json_line(const Message& m);
Message message_from_json_line(const std::string& line);

}  // namespace avtse
