#include "fleet.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "errors.hpp"

namespace avtse {

const char* perception_name(Perception p) {
  switch (p) {
    case Perception::S1: return "S1";
    case Perception::S2: return "S2";
    case Perception::S3: return "S3";
  }
  return "?";
}

Perception parse_perception(const std::string& s) {
  if (s == "S1" || s == "s1" || s == "1") return Perception::S1;
  if (s == "S2" || s == "s2" || s == "2") return Perception::S2;
  if (s == "S3" || s == "s3" || s == "3") return Perception::S3;
  throw ConfigError("unknown perception level: " + s);
}

const char* source_name(Source s) {
  switch (s) {
    case Source::Self: return "self";
    case Source::D1: return "D1";
    case Source::D1Rear: return "D1rear";
    case Source::D2: return "D2";
  }
  return "?";
}

Source parse_source(const std::string& s) {
  if (s == "self") return Source::Self;
  if (s == "D1") return Source::D1;
  if (s == "D1rear") return Source::D1Rear;
  if (s == "D2") return Source::D2;
  throw DataError("unknown detection source: " + s);
}

void SensorConfig::validate(double dt_data) const {
  if (!(lrr_range > 0.0) || !(lidar_range > 0.0)) throw ConfigError("sensor ranges must be positive");
  if (!(missing_rate >= 0.0 && missing_rate <= 1.0)) throw ConfigError("missing_rate must lie in [0, 1]");
  if (!(speed_noise >= 0.0)) throw ConfigError("speed_noise must be non-negative");
  if (!(sampling_rate > 0.0)) throw ConfigError("sampling_rate must be positive");
  if (sampling_rate > 1.0 / dt_data + 1e-9) throw ConfigError("sampling_rate exceeds the trajectory data rate");
  if (!(lane_width > 0.0)) throw ConfigError("lane_width must be positive");
}

std::set<std::string> select_avs(const TrackSet& ts, double penetration, std::uint64_t seed) {
  if (!(penetration >= 0.0 && penetration <= 1.0)) throw ConfigError("penetration must lie in [0, 1]");
  std::set<std::string> out;
  for (const auto& tr : ts.tracks) {
    double u = unit_interval(mix_seed(seed, {fnv1a(tr.vehicle_id)}));
    if (u < penetration) out.insert(tr.vehicle_id);
  }
  return out;
}

namespace {

const TrackPoint* point_at(const VehicleTrack& tr, const SnapshotIndex& index, std::int64_t frame) {
  if (tr.points.empty()) return nullptr;
  auto rel = frame - index.frame_of(tr.entry_time());
  if (rel < 0 || rel >= static_cast<std::int64_t>(tr.points.size())) return nullptr;
  return &tr.points[static_cast<std::size_t>(rel)];
}

double noisy(double v, double xi, Rng* rng) {
  if (xi <= 0.0 || rng == nullptr) return v;
  return v * (1.0 + rng->uniform(-xi, xi));
}

DetectionRecord make_record(const VehicleTrack& av, const SensingFrame& sf, const SnapshotIndex::Entry& e,
                            Source src, double time) {
  const auto& target = sf.ts.tracks[e.track];
  const auto& p = target.points[e.point];
  DetectionRecord r;
  r.reporter_id = av.vehicle_id;
  r.target_id = target.vehicle_id;
  r.time = time;
  r.lane = p.lane;
  r.x = p.x;
  r.source = src;
  return r;
}

}  // namespace

D1Result d1_detect(const VehicleTrack& av, const SensingFrame& sf, Rng* rng_noise) {
  const TrackPoint* me = point_at(av, sf.index, sf.frame);
  if (!me) throw DataError("AV " + av.vehicle_id + " not on the road at frame " + std::to_string(sf.frame));
  D1Result out;
  out.interval = {Source::D1, me->lane, me->x, me->x + sf.cfg.lrr_range};
  auto lane = sf.index.lane_at(sf.frame, me->lane);
  auto it = std::upper_bound(lane.begin(), lane.end(), me->x,
                             [](double x, const SnapshotIndex::Entry& e) { return x < e.x; });
  if (it != lane.end() && it->x - me->x <= sf.cfg.lrr_range) {
    out.interval.hi = it->x;
    DetectionRecord r = make_record(av, sf, *it, Source::D1, me->time);
    r.speed = noisy(sf.ts.tracks[it->track].points[it->point].speed, sf.cfg.speed_noise, rng_noise);
    out.record = std::move(r);
  }
  return out;
}

D1Result d1_rear_detect(const VehicleTrack& av, const SensingFrame& sf, Rng* rng_noise) {
  const TrackPoint* me = point_at(av, sf.index, sf.frame);
  if (!me) throw DataError("AV " + av.vehicle_id + " not on the road at frame " + std::to_string(sf.frame));
  D1Result out;
  out.interval = {Source::D1Rear, me->lane, me->x - sf.cfg.lrr_range, me->x};
  auto lane = sf.index.lane_at(sf.frame, me->lane);
  auto it = std::lower_bound(lane.begin(), lane.end(), me->x,
                             [](const SnapshotIndex::Entry& e, double x) { return e.x < x; });
  if (it != lane.begin()) {
    --it;
    if (me->x - it->x <= sf.cfg.lrr_range) {
      out.interval.lo = it->x;
      DetectionRecord r = make_record(av, sf, *it, Source::D1Rear, me->time);
      r.speed = noisy(sf.ts.tracks[it->track].points[it->point].speed, sf.cfg.speed_noise, rng_noise);
      out.record = std::move(r);
    }
  }
  return out;
}

D2Result d2_detect(const VehicleTrack& av, const SensingFrame& sf, Rng& rng_dropout, Rng* rng_noise,
                   std::span<const std::string> exclude) {
  const TrackPoint* me = point_at(av, sf.index, sf.frame);
  if (!me) throw DataError("AV " + av.vehicle_id + " not on the road at frame " + std::to_string(sf.frame));
  D2Result out;
  const double r = sf.cfg.lidar_range;
  for (int lane : sf.ts.grid.lanes) {
    double d_lat = std::abs(lane - me->lane) * sf.cfg.lane_width;
    if (!(d_lat < r)) continue;
    double w = std::sqrt(r * r - d_lat * d_lat);
    out.intervals.push_back({Source::D2, lane, me->x - w, me->x + w});
    auto entries = sf.index.lane_at(sf.frame, lane);
    auto it = std::lower_bound(entries.begin(), entries.end(), me->x - w,
                               [](const SnapshotIndex::Entry& e, double x) { return e.x < x; });
    for (; it != entries.end() && it->x <= me->x + w; ++it) {
      const auto& target = sf.ts.tracks[it->track];
      if (target.vehicle_id == av.vehicle_id) continue;
      if (std::find(exclude.begin(), exclude.end(), target.vehicle_id) != exclude.end()) continue;
      if (rng_dropout.bernoulli(sf.cfg.missing_rate)) continue;
      DetectionRecord rec = make_record(av, sf, *it, Source::D2, me->time);
      if (sf.cfg.perception == Perception::S3)
        rec.speed = noisy(target.points[it->point].speed, sf.cfg.speed_noise, rng_noise);
      out.records.push_back(std::move(rec));
    }
  }
  return out;
}

void emit_messages(const TrackSet& ts, const std::set<std::string>& avs, const SensorConfig& cfg, std::uint64_t seed,
                   const std::function<void(double, std::vector<Message>&&)>& sink) {
  cfg.validate(ts.dt_data);
  SnapshotIndex index(ts);

  // Messages within one instant are ordered by reporter id.
  std::vector<const VehicleTrack*> fleet;
  {
    std::vector<const VehicleTrack*> by_id;
    for (const auto& tr : ts.tracks)
      if (avs.count(tr.vehicle_id) && !tr.points.empty()) by_id.push_back(&tr);
    std::sort(by_id.begin(), by_id.end(),
              [](const VehicleTrack* a, const VehicleTrack* b) { return a->vehicle_id < b->vehicle_id; });
    fleet = std::move(by_id);
  }
  std::vector<std::int64_t> first(fleet.size()), last(fleet.size());
  std::vector<std::uint64_t> id_hash(fleet.size());
  for (std::size_t i = 0; i < fleet.size(); ++i) {
    first[i] = index.frame_of(fleet[i]->entry_time());
    last[i] = first[i] + static_cast<std::int64_t>(fleet[i]->points.size()) - 1;
    id_hash[i] = fnv1a(fleet[i]->vehicle_id);
  }

  const double period = 1.0 / cfg.sampling_rate;
  std::int64_t prev_frame = -1;
  for (std::int64_t k = 0;; ++k) {
    double t = static_cast<double>(k) * period;
    if (t > ts.grid.t_len + 1e-9) break;
    std::int64_t frame = index.frame_of(t);
    if (frame == prev_frame) continue;
    prev_frame = frame;
    const double time = static_cast<double>(frame) * ts.dt_data;
    SensingFrame sf{ts, index, cfg, frame};

    std::vector<Message> batch;
    for (std::size_t i = 0; i < fleet.size(); ++i) {
      if (frame < first[i] || frame > last[i]) continue;
      const VehicleTrack& av = *fleet[i];
      const TrackPoint& me = av.points[static_cast<std::size_t>(frame - first[i])];
      Rng rng_drop(mix_seed(seed, {id_hash[i], static_cast<std::uint64_t>(frame), 1}));
      Rng rng_noise(mix_seed(seed, {id_hash[i], static_cast<std::uint64_t>(frame), 2}));

      Message m;
      m.reporter_id = av.vehicle_id;
      m.time = time;
      DetectionRecord self;
      self.reporter_id = av.vehicle_id;
      self.target_id = av.vehicle_id;
      self.time = time;
      self.lane = me.lane;
      self.x = me.x;
      self.speed = me.speed;
      self.source = Source::Self;
      m.payload.push_back(self);

      std::vector<std::string> seen;
      auto d1 = d1_detect(av, sf, &rng_noise);
      m.coverage.push_back(d1.interval);
      if (d1.record) {
        seen.push_back(d1.record->target_id);
        m.payload.push_back(*d1.record);
      }
      if (cfg.rear_lrr) {
        auto rear = d1_rear_detect(av, sf, &rng_noise);
        m.coverage.push_back(rear.interval);
        if (rear.record) {
          seen.push_back(rear.record->target_id);
          m.payload.push_back(*rear.record);
        }
      }
      if (cfg.perception != Perception::S1) {
        auto d2 = d2_detect(av, sf, rng_drop, &rng_noise, seen);
        m.coverage.insert(m.coverage.end(), d2.intervals.begin(), d2.intervals.end());
        for (auto& r : d2.records) m.payload.push_back(std::move(r));
      }
      for (auto& r : m.payload) r.target_id.clear();
      batch.push_back(std::move(m));
    }
    if (!batch.empty()) sink(time, std::move(batch));
  }
}

std::vector<Message> emit_messages(const TrackSet& ts, const std::set<std::string>& avs, const SensorConfig& cfg,
                                   std::uint64_t seed) {
  std::vector<Message> all;
  emit_messages(ts, avs, cfg, seed, [&](double, std::vector<Message>&& batch) {
    for (auto& m : batch) all.push_back(std::move(m));
  });
  return all;
}

std::string message_to_json_line(const Message& m) {
  nlohmann::ordered_json j;
  j["reporter"] = m.reporter_id;
  j["time"] = m.time;
  auto cov = nlohmann::ordered_json::array();
  for (const auto& c : m.coverage)
    cov.push_back({{"sensor", source_name(c.sensor)}, {"lane", c.lane}, {"lo", c.lo}, {"hi", c.hi}});
  j["coverage"] = std::move(cov);
  auto recs = nlohmann::ordered_json::array();
  for (const auto& r : m.payload) {
    nlohmann::ordered_json o{{"source", source_name(r.source)}, {"lane", r.lane}, {"x", r.x}};
    if (r.speed) o["speed"] = *r.speed;
    recs.push_back(std::move(o));
  }
  j["records"] = std::move(recs);
  return j.dump();
}

Message message_from_json_line(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
    Message m;
    m.reporter_id = j.at("reporter").get<std::string>();
    m.time = j.at("time").get<double>();
    for (const auto& c : j.at("coverage"))
      m.coverage.push_back({parse_source(c.at("sensor").get<std::string>()), c.at("lane").get<int>(),
                            c.at("lo").get<double>(), c.at("hi").get<double>()});
    for (const auto& r : j.at("records")) {
      DetectionRecord d;
      d.reporter_id = m.reporter_id;
      d.time = m.time;
      d.source = parse_source(r.at("source").get<std::string>());
      d.lane = r.at("lane").get<int>();
      d.x = r.at("x").get<double>();
      if (r.contains("speed")) d.speed = r.at("speed").get<double>();
      m.payload.push_back(std::move(d));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed message line: ") + e.what());
  }
}

}  // namespace avtse
