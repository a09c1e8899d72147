#include <doctest.h>

#include <cmath>

#include "fleet.hpp"
#include "helpers.hpp"

using namespace avtse;
using testutil::straight;

namespace {
TrackSet parked(std::vector<std::pair<int, double>> lane_x, double x_len = 400) {
  std::vector<VehicleTrack> raw;
  int i = 0;
  for (auto [lane, x] : lane_x) raw.push_back(straight("v" + std::to_string(i++), lane, 0, 1, x, 0));
  return testutil::make_set(std::move(raw), 1.0, x_len, 1, 10);
}
}  // namespace

TEST_CASE("av selection limits and nesting") {
  auto cfg = testutil::uniform_platoon();
  cfg.lanes = 3;
  cfg.vehicles_per_lane = 100;
  cfg.duration = 300;
  auto ts = synth_platoon(cfg, 1);
  CHECK(select_avs(ts, 0.0, 7).empty());
  CHECK(select_avs(ts, 1.0, 7).size() == ts.tracks.size());
  auto a = select_avs(ts, 0.05, 7), b = select_avs(ts, 0.10, 7);
  CHECK(!a.empty());
  for (const auto& id : a) CHECK(b.count(id) == 1);
  CHECK(select_avs(ts, 0.05, 7) == a);
}

TEST_CASE("d1 reports the preceding vehicle within range") {
  SensorConfig cfg;
  cfg.lrr_range = 150;
  {
    auto ts = parked({{1, 100}, {1, 180}});
    SnapshotIndex idx(ts);
    auto r = d1_detect(ts.tracks[0], {ts, idx, cfg, 0}, nullptr);
    CHECK(r.interval.lo == 100);
    CHECK(r.interval.hi == 180);
    REQUIRE(r.record);
    CHECK(r.record->x == 180);
    CHECK(r.record->source == Source::D1);
  }
  {
    auto ts = parked({{1, 100}, {1, 260}});
    SnapshotIndex idx(ts);
    auto r = d1_detect(ts.tracks[0], {ts, idx, cfg, 0}, nullptr);
    CHECK(!r.record);
    CHECK(r.interval.hi == 250);
  }
  {
    auto ts = parked({{1, 100}, {1, 140}, {1, 160}});
    SnapshotIndex idx(ts);
    auto r = d1_detect(ts.tracks[0], {ts, idx, cfg, 0}, nullptr);
    REQUIRE(r.record);
    CHECK(r.record->x == 140);
  }
}

TEST_CASE("rear radar reports the follower") {
  SensorConfig cfg;
  auto ts = parked({{1, 60}, {1, 100}, {1, 10}});
  SnapshotIndex idx(ts);
  auto r = d1_rear_detect(ts.tracks[1], {ts, idx, cfg, 0}, nullptr);
  REQUIRE(r.record);
  CHECK(r.record->x == 60);
  CHECK(r.interval.lo == 60);
  CHECK(r.interval.hi == 100);
}

TEST_CASE("d2 footprint per lane") {
  SensorConfig cfg;
  cfg.lidar_range = 50;
  cfg.lane_width = 3.7;
  cfg.missing_rate = 0;
  auto ts = parked({{1, 100}, {1, 120}, {2, 90}, {2, 149}, {2, 160}});
  SnapshotIndex idx(ts);
  Rng drop(1);
  auto r = d2_detect(ts.tracks[0], {ts, idx, cfg, 0}, drop, nullptr);
  REQUIRE(r.intervals.size() == 2);
  for (const auto& iv : r.intervals) {
    double half = (iv.hi - iv.lo) / 2;
    if (iv.lane == 1) CHECK(half == doctest::Approx(50.0));
    else CHECK(half == doctest::Approx(std::sqrt(2500.0 - 13.69)));
    CHECK(half == doctest::Approx(iv.lane == 1 ? 50.0 : 49.863).epsilon(1e-4));
  }
  CHECK(r.records.size() == 3);  // 120, 90, 149; not itself, not 160

  cfg.missing_rate = 1.0;
  auto none = d2_detect(ts.tracks[0], {ts, idx, cfg, 0}, drop, nullptr);
  CHECK(none.records.empty());
  CHECK(none.intervals.size() == 2);
}

TEST_CASE("message schedule, perception levels and determinism") {
  // b is the D1 target; only c (next lane) is left for D2
  auto ts = testutil::make_set(
      {straight("a", 1, 0, 60, 0, 5), straight("b", 1, 0, 60, 30, 5), straight("c", 2, 0, 60, 10, 5)}, 60, 400, 6, 10);
  SensorConfig cfg;
  cfg.sampling_rate = 1.0;
  std::set<std::string> avs{"a"};
  auto msgs = emit_messages(ts, avs, cfg, 3);
  CHECK((msgs.size() == 60 || msgs.size() == 61));
  bool has_d2 = false;
  for (const auto& m : msgs)
    for (const auto& r : m.payload) has_d2 |= r.source == Source::D2;
  CHECK(has_d2);

  cfg.perception = Perception::S1;
  for (const auto& m : emit_messages(ts, avs, cfg, 3)) {
    for (const auto& r : m.payload) CHECK(r.source != Source::D2);
    for (const auto& c : m.coverage) CHECK(c.sensor != Source::D2);
  }

  cfg.perception = Perception::S3;
  cfg.speed_noise = 0.3;
  cfg.missing_rate = 0.5;
  std::string s1, s2;
  for (const auto& m : emit_messages(ts, avs, cfg, 11)) s1 += message_to_json_line(m) + "\n";
  for (const auto& m : emit_messages(ts, avs, cfg, 11)) s2 += message_to_json_line(m) + "\n";
  CHECK(s1 == s2);
}

TEST_CASE("message json round trip") {
  Message m{"a", 1.5, {{Source::D1, 1, 10, 20}, {Source::D2, 2, 0, 49.5}},
            {{"a", "", 1.5, 1, 10, 3.0, Source::Self}, {"a", "", 1.5, 2, 12.25, std::nullopt, Source::D2}}};
  auto back = message_from_json_line(message_to_json_line(m));
  CHECK(back.reporter_id == "a");
  CHECK(back.time == 1.5);
  REQUIRE(back.coverage.size() == 2);
  CHECK(back.coverage[1].hi == 49.5);
  REQUIRE(back.payload.size() == 2);
  CHECK(back.payload[0].source == Source::Self);
  CHECK(back.payload[0].speed == 3.0);
  CHECK(!back.payload[1].speed);
  CHECK(back.payload[1].x == 12.25);
  // target ids are never transmitted
  CHECK(message_to_json_line(m).find("target") == std::string::npos);
}

TEST_CASE("sensor config validation") {
  SensorConfig c;
  c.missing_rate = 1.5;
  CHECK_THROWS(c.validate(0.1));
  c = {};
  c.sampling_rate = 20;  // faster than 10 Hz data
  CHECK_THROWS(c.validate(0.1));
  c = {};
  CHECK_NOTHROW(c.validate(0.1));
}
