#pragma once

#include <string>
#include <vector>

#include "trajectory.hpp"

namespace testutil {

// Straight constant-speed track sampled at dt over [t0, t1].
inline avtse::VehicleTrack straight(const std::string& id, int lane, double t0, double t1, double x0, double v,
                                    double dt = 0.1) {
  avtse::VehicleTrack tr{id, {}};
  auto n = static_cast<int>(std::llround((t1 - t0) / dt));
  for (int i = 0; i <= n; ++i) {
    double t = t0 + i * dt;
    tr.points.push_back({t, x0 + v * (t - t0), lane, v, std::nullopt});
  }
  return tr;
}

inline avtse::TrackSet make_set(std::vector<avtse::VehicleTrack> raw, double t_len, double x_len, int n_h, int n_s,
                                double dt = 0.1) {
  avtse::ParseOptions o;
  o.t_len = t_len;
  o.x_len = x_len;
  o.n_h = n_h;
  o.n_s = n_s;
  o.dt_data = dt;
  return avtse::assemble_trackset(std::move(raw), o, {});
}

inline avtse::SynthConfig uniform_platoon() {
  avtse::SynthConfig c;
  c.lanes = 1;
  c.vehicles_per_lane = 30;
  c.free_speed = 10.0;
  c.spacing = 20.0;
  c.road_length = 200.0;
  c.duration = 80.0;
  c.n_h = 8;
  c.n_s = 20;
  return c;
}

}  // namespace testutil
