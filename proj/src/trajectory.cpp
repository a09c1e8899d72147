#include "trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "csv.hpp"
#include "errors.hpp"
#include "rng.hpp"

namespace avtse {

CellIndex Grid::cell_of(double t, double x) const {
  if (!(t >= 0.0 && t <= t_len) || !(x >= 0.0 && x <= x_len)) {
    std::ostringstream msg;
    msg << "point (t=" << t << ", x=" << x << ") outside [0," << t_len << "]x[0," << x_len << "]";
    throw BoundsError(msg.str());
  }
  int h = std::min(static_cast<int>(std::floor(t / dt_h())), n_h - 1);
  int s = std::min(static_cast<int>(std::floor(x / dx())), n_s - 1);
  return {h, s};
}

int Grid::lane_index(int lane) const {
  auto it = std::find(lanes.begin(), lanes.end(), lane);
  return it == lanes.end() ? -1 : static_cast<int>(it - lanes.begin());
}

void Grid::validate() const {
  if (!(t_len > 0.0) || !(x_len > 0.0)) throw ConfigError("grid extent must be positive");
  if (n_h <= 0 || n_s <= 0) throw ConfigError("grid needs at least one interval and one segment");
  if (!(lane_width > 0.0)) throw ConfigError("lane_width must be positive");
}

ColumnSchema ColumnSchema::ngsim() {
  ColumnSchema s;
  s.vehicle_id = "Vehicle_ID";
  s.time = "";
  s.frame = "Frame_ID";
  s.lane = "Lane_ID";
  s.x = "Local_Y";
  s.speed = "v_Vel";
  s.space_headway = "Space_Headway";
  return s;
}

void fill_speeds_from_positions(VehicleTrack& track, double dt) {
  auto& p = track.points;
  const std::size_t n = p.size();
  if (n == 1) {
    p[0].speed = 0.0;
    return;
  }
  for (std::size_t i = 0; i < n; ++i) {
    double v;
    if (i == 0)
      v = (p[1].x - p[0].x) / dt;
    else if (i + 1 == n)
      v = (p[n - 1].x - p[n - 2].x) / dt;
    else
      v = (p[i + 1].x - p[i - 1].x) / (2.0 * dt);
    p[i].speed = std::max(v, 0.0);
  }
}

namespace {

double lerp(double a, double b, double w) { return a + (b - a) * w; }

std::vector<TrackPoint> resample(const std::vector<TrackPoint>& pts, double dt) {
  std::vector<TrackPoint> out;
  const double t0 = pts.front().time;
  const auto steps = static_cast<std::int64_t>(std::floor((pts.back().time - t0) / dt + 1e-9));
  std::size_t j = 0;
  for (std::int64_t k = 0; k <= steps; ++k) {
    double t = t0 + static_cast<double>(k) * dt;
    while (j + 1 < pts.size() && pts[j + 1].time <= t) ++j;
    const TrackPoint& a = pts[j];
    if (j + 1 == pts.size() || a.time == t) {
      TrackPoint p = a;
      p.time = t;
      out.push_back(p);
      continue;
    }
    const TrackPoint& b = pts[j + 1];
    double w = (t - a.time) / (b.time - a.time);
    TrackPoint p = a;
    p.time = t;
    p.x = lerp(a.x, b.x, w);
    p.speed = lerp(a.speed, b.speed, w);
    if (a.has_finite_headway() && b.has_finite_headway())
      p.space_headway = lerp(*a.space_headway, *b.space_headway, w);
    out.push_back(p);
  }
  return out;
}

bool uniformly_spaced(const std::vector<TrackPoint>& pts, double dt) {
  for (std::size_t i = 1; i < pts.size(); ++i)
    if (std::abs(pts[i].time - pts[i - 1].time - dt) > 1e-9) return false;
  return true;
}

}  // namespace

TrackSet assemble_trackset(std::vector<VehicleTrack> raw, const ParseOptions& opts, UnitInfo units) {
  if (!(opts.dt_data > 0.0)) throw ConfigError("dt_data must be positive");

  double offset = opts.time_offset;
  if (std::isnan(offset)) {
    offset = std::numeric_limits<double>::infinity();
    for (const auto& tr : raw)
      for (const auto& p : tr.points) offset = std::min(offset, p.time);
    if (!std::isfinite(offset)) offset = 0.0;
  }
  if (offset != 0.0)
    for (auto& tr : raw)
      for (auto& p : tr.points) p.time -= offset;

  TrackSet ts;
  ts.dt_data = opts.dt_data;
  ts.units = units;
  Grid& g = ts.grid;
  g.n_h = opts.n_h;
  g.n_s = opts.n_s;
  g.lane_width = opts.lane_width;

  std::set<int> lanes_seen;
  double t_max = 0.0, x_max = 0.0;
  for (const auto& tr : raw)
    for (const auto& p : tr.points) {
      if (p.time < 0.0) continue;
      lanes_seen.insert(p.lane);
      t_max = std::max(t_max, p.time);
      x_max = std::max(x_max, p.x);
    }
  g.t_len = opts.t_len.value_or(t_max);
  g.x_len = opts.x_len.value_or(x_max);
  g.lanes = opts.lanes.empty() ? std::vector<int>(lanes_seen.begin(), lanes_seen.end()) : opts.lanes;
  std::sort(g.lanes.begin(), g.lanes.end());
  g.validate();

  std::set<std::string> used_ids;
  for (auto& tr : raw) {
    std::vector<std::vector<TrackPoint>> pieces;
    std::vector<TrackPoint> cur;
    auto flush = [&] {
      if (!cur.empty()) pieces.push_back(std::move(cur));
      cur.clear();
    };
    for (const auto& p : tr.points) {
      bool inside = p.time >= 0.0 && p.time <= g.t_len && p.x >= 0.0 && p.x <= g.x_len &&
                    g.lane_index(p.lane) >= 0;
      if (!inside) {
        flush();
        continue;
      }
      if (!cur.empty() && p.time - cur.back().time > 1.5 * opts.dt_data) flush();
      cur.push_back(p);
    }
    flush();

    int piece_no = 0;
    for (auto& pts : pieces) {
      VehicleTrack out;
      out.vehicle_id = piece_no == 0 ? tr.vehicle_id : tr.vehicle_id + "#" + std::to_string(piece_no);
      while (used_ids.count(out.vehicle_id)) out.vehicle_id += "'";
      used_ids.insert(out.vehicle_id);
      ++piece_no;
      out.points = uniformly_spaced(pts, opts.dt_data) ? std::move(pts) : resample(pts, opts.dt_data);
      if (units.speed_derived) fill_speeds_from_positions(out, opts.dt_data);
      ts.tracks.push_back(std::move(out));
    }
  }
  return ts;
}

TrackSet parse_trajectories_text(const std::string& text, const ParseOptions& opts) {
  const ColumnSchema& sc = opts.schema;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw SchemaError(sc.vehicle_id);

  auto header = csv::split(line);
  auto col = [&](const std::string& name) -> int {
    if (name.empty()) return -1;
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  };
  const int c_id = col(sc.vehicle_id), c_time = col(sc.time), c_frame = col(sc.frame), c_lane = col(sc.lane),
            c_x = col(sc.x), c_speed = col(sc.speed), c_head = col(sc.space_headway);
  if (c_id < 0) throw SchemaError(sc.vehicle_id);
  if (c_time < 0 && c_frame < 0) throw SchemaError(sc.time.empty() ? sc.frame : sc.time);
  if (c_lane < 0) throw SchemaError(sc.lane);
  if (c_x < 0) throw SchemaError(sc.x);

  const double factor = opts.unit_mode == UnitMode::Feet ? kFeetToMeters : 1.0;
  UnitInfo units;
  units.source_units = opts.unit_mode == UnitMode::Feet ? "feet" : "metric";
  units.length_factor = factor;
  units.speed_derived = c_speed < 0;

  std::vector<VehicleTrack> raw;
  std::unordered_map<std::string, std::size_t> by_id;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    auto f = csv::split(line);
    auto field = [&](int c) -> std::string_view {
      return c >= 0 && static_cast<std::size_t>(c) < f.size() ? f[static_cast<std::size_t>(c)] : std::string_view{};
    };
    auto bad = [&](const char* what) {
      return DataError("line " + std::to_string(line_no) + ": cannot parse " + what);
    };

    TrackPoint p;
    std::string id(field(c_id));
    if (id.empty()) throw bad("vehicle_id");
    double v = 0.0;
    long long iv = 0;
    if (c_time >= 0) {
      if (!csv::parse_double(field(c_time), v)) throw bad("time");
      p.time = v;
    } else {
      if (!csv::parse_int(field(c_frame), iv)) throw bad("frame");
      p.time = static_cast<double>(iv) * opts.dt_data;
    }
    if (!csv::parse_int(field(c_lane), iv)) throw bad("lane");
    p.lane = static_cast<int>(iv);
    if (!csv::parse_double(field(c_x), v)) throw bad("x");
    p.x = v * factor;
    if (c_speed >= 0) {
      if (!csv::parse_double(field(c_speed), v)) throw bad("speed");
      p.speed = std::max(v * factor, 0.0);
    }
    if (c_head >= 0 && !field(c_head).empty()) {
      if (!csv::parse_double(field(c_head), v)) throw bad("space_headway");
      // NGSIM writes 0 for "no preceding vehicle".
      if (v > 0.0) p.space_headway = std::isinf(v) ? kLeaderHeadway : v * factor;
      else p.space_headway = kLeaderHeadway;
    }

    auto [it, fresh] = by_id.try_emplace(id, raw.size());
    if (fresh) raw.push_back(VehicleTrack{id, {}});
    auto& pts = raw[it->second].points;
    if (!pts.empty() && p.time <= pts.back().time)
      throw DataError("non-monotone time for vehicle " + id + " at line " + std::to_string(line_no));
    pts.push_back(p);
  }
  return assemble_trackset(std::move(raw), opts, units);
}

TrackSet parse_trajectories(const std::string& path, const ParseOptions& opts) {
  return parse_trajectories_text(csv::read_file(path), opts);
}

std::string format_trajectories(const TrackSet& ts) {
  std::string out = "vehicle_id,time_s,lane,x,speed,space_headway\n";
  for (const auto& tr : ts.tracks)
    for (const auto& p : tr.points) {
      out += tr.vehicle_id;
      out += ',';
      out += csv::format_double(p.time);
      out += ',';
      out += std::to_string(p.lane);
      out += ',';
      out += csv::format_double(p.x);
      out += ',';
      out += csv::format_double(p.speed);
      out += ',';
      if (p.space_headway) out += std::isinf(*p.space_headway) ? "inf" : csv::format_double(*p.space_headway);
      out += '\n';
    }
  return out;
}

void write_trajectories(const TrackSet& ts, const std::string& path) {
  csv::write_file(path, format_trajectories(ts));
}

SnapshotIndex::SnapshotIndex(const TrackSet& ts) : dt_(ts.dt_data) {
  std::int64_t lo = std::numeric_limits<std::int64_t>::max(), hi = std::numeric_limits<std::int64_t>::min();
  for (const auto& tr : ts.tracks)
    for (const auto& p : tr.points) {
      auto f = frame_of(p.time);
      lo = std::min(lo, f);
      hi = std::max(hi, f);
    }
  if (lo > hi) {
    offsets_.assign(1, 0);
    return;
  }
  first_ = lo;
  const auto n_frames = static_cast<std::size_t>(hi - lo + 1);
  offsets_.assign(n_frames + 1, 0);
  for (const auto& tr : ts.tracks)
    for (const auto& p : tr.points) ++offsets_[static_cast<std::size_t>(frame_of(p.time) - first_) + 1];
  for (std::size_t i = 1; i < offsets_.size(); ++i) offsets_[i] += offsets_[i - 1];
  entries_.resize(offsets_.back());
  std::vector<std::size_t> fill(offsets_.begin(), offsets_.end() - 1);
  for (std::uint32_t ti = 0; ti < ts.tracks.size(); ++ti) {
    const auto& pts = ts.tracks[ti].points;
    for (std::uint32_t pi = 0; pi < pts.size(); ++pi) {
      auto slot = static_cast<std::size_t>(frame_of(pts[pi].time) - first_);
      entries_[fill[slot]++] = Entry{pts[pi].lane, pts[pi].x, ti, pi};
    }
  }
  for (std::size_t f = 0; f < n_frames; ++f)
    std::sort(entries_.begin() + static_cast<std::ptrdiff_t>(offsets_[f]),
              entries_.begin() + static_cast<std::ptrdiff_t>(offsets_[f + 1]), [](const Entry& a, const Entry& b) {
                return a.lane != b.lane ? a.lane < b.lane : (a.x != b.x ? a.x < b.x : a.track < b.track);
              });
}

std::int64_t SnapshotIndex::frame_of(double t) const { return std::llround(t / dt_); }

std::span<const SnapshotIndex::Entry> SnapshotIndex::at(std::int64_t frame) const {
  if (frame < first_ || frame > last_frame()) return {};
  auto f = static_cast<std::size_t>(frame - first_);
  return {entries_.data() + offsets_[f], offsets_[f + 1] - offsets_[f]};
}

std::span<const SnapshotIndex::Entry> SnapshotIndex::lane_at(std::int64_t frame, int lane) const {
  auto all = at(frame);
  auto lo = std::lower_bound(all.begin(), all.end(), lane, [](const Entry& e, int l) { return e.lane < l; });
  auto hi = std::upper_bound(lo, all.end(), lane, [](int l, const Entry& e) { return l < e.lane; });
  return {lo, hi};
}

TrackSet derive_headways(const TrackSet& ts) {
  TrackSet out = ts;
  out.units.headway_derived = true;
  SnapshotIndex index(ts);
  for (auto f = index.first_frame(); f <= index.last_frame(); ++f) {
    auto snap = index.at(f);
    for (std::size_t i = 0; i < snap.size(); ++i) {
      const auto& e = snap[i];
      double headway = kLeaderHeadway;
      for (std::size_t j = i + 1; j < snap.size() && snap[j].lane == e.lane; ++j) {
        if (snap[j].x > e.x) {
          headway = snap[j].x - e.x;
          break;
        }
      }
      out.tracks[e.track].points[e.point].space_headway = headway;
    }
  }
  return out;
}

TrackSet synth_platoon(const SynthConfig& cfg, std::uint64_t seed) {
  if (!(cfg.spacing > 0.0)) throw ConfigError("synthetic spacing must be positive");
  if (!(cfg.free_speed > 0.0)) throw ConfigError("synthetic free_speed must be positive");
  if (cfg.lanes <= 0 || cfg.vehicles_per_lane <= 0) throw ConfigError("synthetic scenario needs lanes and vehicles");
  if (!(cfg.dt > 0.0) || !(cfg.road_length > 0.0) || !(cfg.duration > 0.0))
    throw ConfigError("synthetic dt, road_length and duration must be positive");
  if (cfg.jam_spacing < 0.0 || cfg.wave_time < 0.0) throw ConfigError("car-following parameters must be non-negative");
  if (cfg.headway_dist == HeadwayDistribution::ShiftedExponential && cfg.spacing <= cfg.jam_spacing)
    throw ConfigError("shifted-exponential spacing must exceed jam_spacing");
  if (cfg.slowdown && !(cfg.slowdown->speed >= 0.0)) throw ConfigError("slowdown speed must be non-negative");

  const double dt = cfg.dt;
  const auto n_steps = static_cast<std::int64_t>(std::llround(cfg.duration / dt));
  const auto lag = static_cast<std::int64_t>(std::llround(cfg.wave_time / dt));
  const double retire_x = cfg.road_length + 500.0;

  auto speed_limit = [&](double t, double x) {
    const auto& sd = cfg.slowdown;
    if (sd && t >= sd->start && t < sd->start + sd->duration && x >= sd->x_from && x < sd->x_to) return sd->speed;
    return cfg.free_speed;
  };

  std::vector<VehicleTrack> raw;
  for (int lane = 1; lane <= cfg.lanes; ++lane) {
    Rng rng(mix_seed(seed, {static_cast<std::uint64_t>(lane)}));
    const int n = cfg.vehicles_per_lane;

    std::vector<std::int64_t> scheduled(static_cast<std::size_t>(n));
    double t_entry = 0.0;
    for (int i = 0; i < n; ++i) {
      if (i > 0) {
        double gap = cfg.headway_dist == HeadwayDistribution::Constant
                         ? cfg.spacing
                         : cfg.jam_spacing + rng.exponential(cfg.spacing - cfg.jam_spacing);
        t_entry += gap / cfg.free_speed;
      }
      scheduled[static_cast<std::size_t>(i)] = std::llround(t_entry / dt);
    }

    // Positions per vehicle, indexed from its entry step.
    std::vector<std::vector<double>> pos(static_cast<std::size_t>(n));
    std::vector<std::int64_t> entered(static_cast<std::size_t>(n), -1);
    std::vector<bool> retired(static_cast<std::size_t>(n), false);

    auto leader_at = [&](std::size_t i, std::int64_t k) -> std::optional<double> {
      // Position of vehicle i-1 at step k, when it exists and is still simulated.
      const std::size_t L = i - 1;
      if (entered[L] < 0 || k < entered[L]) return std::nullopt;
      auto rel = static_cast<std::size_t>(k - entered[L]);
      if (rel >= pos[L].size()) return std::nullopt;
      return pos[L][rel];
    };

    for (std::int64_t k = 0; k <= n_steps; ++k) {
      for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
        if (retired[i]) continue;
        if (entered[i] < 0) {
          if (k < scheduled[i]) break;  // later vehicles are scheduled even later
          bool clear = true;
          if (i > 0) {
            if (entered[i - 1] < 0) break;
            auto lead = leader_at(i, k - lag);
            clear = retired[i - 1] || (lead && *lead - cfg.jam_spacing >= 0.0);
          }
          if (!clear) break;
          entered[i] = k;
          pos[i].push_back(0.0);
          continue;
        }
        double x = pos[i].back();
        double t = static_cast<double>(k - 1) * dt;
        double next = x + speed_limit(t, x) * dt;
        if (i > 0 && !retired[i - 1]) {
          auto lead = leader_at(i, k - lag);
          if (lead) next = std::min(next, *lead - cfg.jam_spacing);
        }
        next = std::max(next, x);
        pos[i].push_back(next);
        if (next > retire_x) retired[i] = true;
      }
    }

    for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
      if (entered[i] < 0) continue;
      VehicleTrack tr;
      char id[32];
      std::snprintf(id, sizeof id, "%d-%04zu", lane, i);
      tr.vehicle_id = id;
      for (std::size_t r = 0; r < pos[i].size(); ++r) {
        std::int64_t k = entered[i] + static_cast<std::int64_t>(r);
        TrackPoint p;
        p.time = static_cast<double>(k) * dt;
        p.x = pos[i][r];
        p.lane = lane;
        if (i == 0) {
          p.space_headway = kLeaderHeadway;
        } else {
          auto lead = leader_at(i, k);
          if (lead) {
            p.space_headway = *lead - p.x;
          } else if (entered[i - 1] >= 0 && k >= entered[i - 1]) {
            // Leader retired beyond the road end; it keeps free speed.
            double last = pos[i - 1].back();
            auto last_k = entered[i - 1] + static_cast<std::int64_t>(pos[i - 1].size()) - 1;
            p.space_headway = last + cfg.free_speed * static_cast<double>(k - last_k) * dt - p.x;
          } else {
            p.space_headway = kLeaderHeadway;
          }
        }
        if (p.space_headway && *p.space_headway <= 0.0) p.space_headway = kLeaderHeadway;
        tr.points.push_back(p);
      }
      fill_speeds_from_positions(tr, dt);
      raw.push_back(std::move(tr));
    }
  }

  ParseOptions opts;
  opts.dt_data = dt;
  opts.t_len = cfg.duration;
  opts.x_len = cfg.road_length;
  opts.n_h = cfg.n_h;
  opts.n_s = cfg.n_s;
  opts.lane_width = cfg.lane_width;
  for (int l = 1; l <= cfg.lanes; ++l) opts.lanes.push_back(l);
  UnitInfo units;
  units.source_units = "synthetic";
  return assemble_trackset(std::move(raw), opts, units);
}

}  // namespace avtse
