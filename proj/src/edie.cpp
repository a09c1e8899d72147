#include "edie.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <tuple>
#include <unordered_set>

namespace avtse {

double polygon_area(std::span<const TsPoint> poly) {
  const std::size_t n = poly.size();
  if (n < 3) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % n];
    acc += p.t * q.x - q.t * p.x;
  }
  return std::abs(acc) * 0.5;
}

namespace {

// One Sutherland-Hodgman pass against the half-plane `inside`.
template <class Inside, class Cross>
std::size_t clip_pass(const TsPoint* in, std::size_t n, TsPoint* out, Inside inside, Cross cross) {
  std::size_t m = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const TsPoint& cur = in[i];
    const TsPoint& prev = in[(i + n - 1) % n];
    bool cin = inside(cur), pin = inside(prev);
    if (cin) {
      if (!pin) out[m++] = cross(prev, cur);
      out[m++] = cur;
    } else if (pin) {
      out[m++] = cross(prev, cur);
    }
  }
  return m;
}

TsPoint cross_t(const TsPoint& a, const TsPoint& b, double t) {
  double w = (t - a.t) / (b.t - a.t);
  return {t, a.x + w * (b.x - a.x)};
}

TsPoint cross_x(const TsPoint& a, const TsPoint& b, double x) {
  double w = (x - a.x) / (b.x - a.x);
  return {a.t + w * (b.t - a.t), x};
}

// Clips into `buf_a` (which must hold the input) and returns the vertex count.
// Buffers need room for n + 4 vertices.
std::size_t clip_inplace(TsPoint* buf_a, TsPoint* buf_b, std::size_t n, const Rect& r) {
  n = clip_pass(buf_a, n, buf_b, [&](const TsPoint& p) { return p.t >= r.t0; },
                [&](const TsPoint& a, const TsPoint& b) { return cross_t(a, b, r.t0); });
  n = clip_pass(buf_b, n, buf_a, [&](const TsPoint& p) { return p.t <= r.t1; },
                [&](const TsPoint& a, const TsPoint& b) { return cross_t(a, b, r.t1); });
  n = clip_pass(buf_a, n, buf_b, [&](const TsPoint& p) { return p.x >= r.x0; },
                [&](const TsPoint& a, const TsPoint& b) { return cross_x(a, b, r.x0); });
  n = clip_pass(buf_b, n, buf_a, [&](const TsPoint& p) { return p.x <= r.x1; },
                [&](const TsPoint& a, const TsPoint& b) { return cross_x(a, b, r.x1); });
  return n;
}

double clipped_area_small(const TsPoint* poly, std::size_t n, const Rect& r) {
  std::array<TsPoint, 16> a{}, b{};
  std::copy(poly, poly + n, a.begin());
  std::size_t m = clip_inplace(a.data(), b.data(), n, r);
  return polygon_area({a.data(), m});
}

}  // namespace

Polygon clip_to_rect(std::span<const TsPoint> poly, const Rect& r) {
  std::vector<TsPoint> a(poly.begin(), poly.end()), b;
  a.resize(2 * poly.size() + 8);
  b.resize(a.size());
  std::size_t m = clip_inplace(a.data(), b.data(), poly.size(), r);
  a.resize(m);
  return a;
}

HeadwayBand HeadwayBand::from_polygon(Polygon poly, int lane) {
  HeadwayBand band;
  band.lane = lane;
  band.strips.push_back(std::move(poly));
  return band;
}

double clip_band_to_cell(const HeadwayBand& band, const Rect& cell) {
  double total = 0.0;
  for (const auto& strip : band.strips) {
    if (strip.size() < 3) continue;
    if (strip.size() <= 8) {
      total += clipped_area_small(strip.data(), strip.size(), cell);
    } else {
      total += polygon_area(clip_to_rect(strip, cell));
    }
  }
  return total;
}

namespace {

struct SegmentEnd {
  double t;
  double x;
  double headway;  // +inf or NaN when there is no usable band
};

SegmentEnd end_of(const TrackPoint& p) {
  return {p.time, p.x, p.has_finite_headway() ? *p.space_headway : kLeaderHeadway};
}

bool band_ok(const SegmentEnd& a, const SegmentEnd& b) {
  return std::isfinite(a.headway) && std::isfinite(b.headway) && a.headway > 0.0 && b.headway > 0.0;
}

template <class Visit>
void walk_track(const VehicleTrack& track, Visit visit) {
  const auto& pts = track.points;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    SegmentEnd a = end_of(pts[i]), b = end_of(pts[i + 1]);
    if (pts[i].lane == pts[i + 1].lane) {
      visit(pts[i].lane, a, b);
      continue;
    }
    SegmentEnd mid{0.5 * (a.t + b.t), 0.5 * (a.x + b.x),
                   band_ok(a, b) ? 0.5 * (a.headway + b.headway) : kLeaderHeadway};
    visit(pts[i].lane, a, mid);
    visit(pts[i + 1].lane, mid, b);
  }
}

void segment_pieces(const SegmentEnd& a, const SegmentEnd& b, int lane_idx, const Grid& g,
                    const std::function<void(int, int, int, double, double, double)>& sink) {
  const double span_t = b.t - a.t;
  if (!(span_t > 0.0)) return;
  const double dth = g.dt_h(), dxs = g.dx();

  // Trajectory: split at every cell boundary crossed.
  thread_local std::vector<double> breaks;
  breaks.assign({0.0, 1.0});
  for (auto k = static_cast<long>(std::floor(a.t / dth)) + 1; k * dth < b.t; ++k)
    breaks.push_back((k * dth - a.t) / span_t);
  const double xlo = std::min(a.x, b.x), xhi = std::max(a.x, b.x);
  if (xhi > xlo)
    for (auto m = static_cast<long>(std::floor(xlo / dxs)) + 1; m * dxs < xhi; ++m)
      breaks.push_back((m * dxs - a.x) / (b.x - a.x));
  std::sort(breaks.begin(), breaks.end());

  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    double w0 = breaks[i], w1 = breaks[i + 1];
    if (w1 <= w0) continue;
    double wm = 0.5 * (w0 + w1);
    double tm = a.t + wm * span_t, xm = a.x + wm * (b.x - a.x);
    if (tm < 0.0 || tm > g.t_len || xm < 0.0 || xm > g.x_len) continue;
    int h = std::min(static_cast<int>(tm / dth), g.n_h - 1);
    int s = std::min(static_cast<int>(xm / dxs), g.n_s - 1);
    sink(lane_idx, h, s, (w1 - w0) * std::abs(b.x - a.x), (w1 - w0) * span_t, 0.0);
  }

  if (!band_ok(a, b)) return;
  const TsPoint quad[4] = {{a.t, a.x}, {b.t, b.x}, {b.t, b.x + b.headway}, {a.t, a.x + a.headway}};
  const double qx0 = std::max(std::min(a.x, b.x), 0.0);
  const double qx1 = std::min(std::max(a.x + a.headway, b.x + b.headway), g.x_len);
  const double qt0 = std::max(a.t, 0.0), qt1 = std::min(b.t, g.t_len);
  if (qx1 <= qx0 || qt1 <= qt0) return;
  const int h0 = std::clamp(static_cast<int>(std::floor(qt0 / dth)), 0, g.n_h - 1);
  const int h1 = std::clamp(static_cast<int>(std::ceil(qt1 / dth)) - 1, h0, g.n_h - 1);
  const int s0 = std::clamp(static_cast<int>(std::floor(qx0 / dxs)), 0, g.n_s - 1);
  const int s1 = std::clamp(static_cast<int>(std::ceil(qx1 / dxs)) - 1, s0, g.n_s - 1);
  const double full = span_t * 0.5 * (a.headway + b.headway);
  const double bx0 = std::min(a.x, b.x), bx1 = std::max(a.x + a.headway, b.x + b.headway);
  for (int h = h0; h <= h1; ++h)
    for (int s = s0; s <= s1; ++s) {
      Rect cell{h * dth, (h + 1) * dth, s * dxs, (s + 1) * dxs};
      double area;
      if (a.t >= cell.t0 && b.t <= cell.t1 && bx0 >= cell.x0 && bx1 <= cell.x1)
        area = full;
      else
        area = clipped_area_small(quad, 4, cell);
      if (area > 0.0) sink(lane_idx, h, s, 0.0, 0.0, area);
    }
}

}  // namespace

std::vector<HeadwayBand> headway_bands(const VehicleTrack& track) {
  std::vector<HeadwayBand> bands;
  int current_lane = 0;
  bool open = false;
  walk_track(track, [&](int lane, const SegmentEnd& a, const SegmentEnd& b) {
    if (!band_ok(a, b) || !(b.t > a.t)) {
      open = false;
      return;
    }
    if (!open || lane != current_lane) {
      bands.push_back(HeadwayBand{track.vehicle_id, lane, {}});
      current_lane = lane;
      open = true;
    }
    bands.back().strips.push_back({{a.t, a.x}, {b.t, b.x}, {b.t, b.x + b.headway}, {a.t, a.x + a.headway}});
  });
  return bands;
}

const char* quantity_name(Quantity q) {
  switch (q) {
    case Quantity::Density: return "density";
    case Quantity::Speed: return "speed";
    case Quantity::Flow: return "flow";
  }
  return "?";
}

CellSums::CellSums(const Grid& g) : grid(g) {
  for (std::size_t i = 0; i < g.lanes.size(); ++i) {
    d.push_back(Eigen::MatrixXd::Zero(g.n_s, g.n_h));
    t.push_back(Eigen::MatrixXd::Zero(g.n_s, g.n_h));
    a.push_back(Eigen::MatrixXd::Zero(g.n_s, g.n_h));
  }
}

void CellSums::merge(const CellSums& other) {
  for (std::size_t i = 0; i < d.size(); ++i) {
    d[i] += other.d[i];
    t[i] += other.t[i];
    a[i] += other.a[i];
  }
}

void accumulate_track(const VehicleTrack& track, const Grid& grid,
                      const std::function<void(int, int, int, double, double, double)>& sink) {
  walk_track(track, [&](int lane, const SegmentEnd& a, const SegmentEnd& b) {
    int li = grid.lane_index(lane);
    if (li < 0) return;
    segment_pieces(a, b, li, grid, sink);
  });
}

void accumulate_track(const VehicleTrack& track, CellSums& sums) {
  accumulate_track(track, sums.grid,
                   [&](int li, int h, int s, double dd, double tt, double aa) { sums.add(li, h, s, dd, tt, aa); });
}

std::vector<CellContribution> cell_contributions(const TrackSet& ts, std::span<const std::string> vehicles) {
  std::unordered_set<std::string> wanted(vehicles.begin(), vehicles.end());
  std::vector<CellContribution> out;
  for (const auto& tr : ts.tracks) {
    if (!wanted.empty() && !wanted.count(tr.vehicle_id)) continue;
    std::map<std::tuple<int, int, int>, CellContribution> cells;
    accumulate_track(tr, ts.grid, [&](int li, int h, int s, double dd, double tt, double aa) {
      auto& c = cells[{li, h, s}];
      c.d += dd;
      c.t += tt;
      c.a += aa;
    });
    for (auto& [key, c] : cells) {
      c.vehicle_id = tr.vehicle_id;
      c.lane = ts.grid.lanes[static_cast<std::size_t>(std::get<0>(key))];
      c.h = std::get<1>(key);
      c.s = std::get<2>(key);
      out.push_back(std::move(c));
    }
  }
  return out;
}

std::vector<LaneStates> states_from_sums(const CellSums& sums) {
  const Grid& g = sums.grid;
  std::vector<LaneStates> out;
  for (std::size_t li = 0; li < g.lanes.size(); ++li) {
    int lane = g.lanes[li];
    LaneStates st{lane, CellField(lane, Quantity::Density, g.n_s, g.n_h), CellField(lane, Quantity::Speed, g.n_s, g.n_h),
                  CellField(lane, Quantity::Flow, g.n_s, g.n_h)};
    for (int s = 0; s < g.n_s; ++s)
      for (int h = 0; h < g.n_h; ++h) {
        double d = sums.d[li](s, h), t = sums.t[li](s, h), a = sums.a[li](s, h);
        if (!(a > 0.0) || !(t > 0.0)) continue;
        st.density.set(s, h, t / a);
        st.speed.set(s, h, d / t);
        st.flow.set(s, h, d / a);
      }
    out.push_back(std::move(st));
  }
  return out;
}

std::vector<LaneStates> ground_truth(const TrackSet& ts) {
  CellSums sums(ts.grid);
  for (const auto& tr : ts.tracks) accumulate_track(tr, sums);
  return states_from_sums(sums);
}

}  // namespace avtse
