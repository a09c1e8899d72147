#include "datacenter.hpp"

#include <algorithm>
#include <cmath>

#include "errors.hpp"

namespace avtse {

namespace {

std::vector<MergedRecord> merge_sorted(std::vector<MergedRecord> recs, double tol) {
  std::sort(recs.begin(), recs.end(), [](const MergedRecord& a, const MergedRecord& b) {
    return a.lane != b.lane ? a.lane < b.lane : a.x < b.x;
  });
  std::vector<MergedRecord> out;
  std::size_t i = 0;
  while (i < recs.size()) {
    std::size_t j = i + 1;
    while (j < recs.size() && recs[j].lane == recs[i].lane && recs[j].x - recs[j - 1].x <= tol) ++j;

    MergedRecord m;
    m.lane = recs[i].lane;
    m.multiplicity = 0;
    const MergedRecord* self = nullptr;
    double sx = 0.0, sv = 0.0;
    int nv = 0;
    bool any_d1 = false;
    for (std::size_t k = i; k < j; ++k) {
      const auto& r = recs[k];
      m.multiplicity += r.multiplicity;
      if (r.source == Source::Self && !self) self = &r;
      if (r.source == Source::D1 || r.source == Source::D1Rear) any_d1 = true;
      sx += r.x;
      if (r.speed) {
        sv += *r.speed;
        ++nv;
      }
    }
    if (self) {
      m.x = self->x;
      m.speed = self->speed;
      m.source = Source::Self;
    } else {
      m.x = sx / static_cast<double>(j - i);
      if (nv > 0) m.speed = sv / nv;
      m.source = any_d1 ? Source::D1 : Source::D2;
    }
    out.push_back(m);
    i = j;
  }
  return out;
}

}  // namespace

std::vector<MergedRecord> deduplicate(std::span<const DetectionRecord> records, double tol) {
  std::vector<MergedRecord> recs;
  recs.reserve(records.size());
  for (const auto& r : records) recs.push_back({r.lane, r.x, r.speed, r.source, 1});
  return merge_sorted(std::move(recs), tol);
}

std::vector<MergedRecord> deduplicate(std::span<const MergedRecord> records, double tol) {
  return merge_sorted({records.begin(), records.end()}, tol);
}

double covered_length(std::span<const CoverageInterval> intervals, double lo, double hi) {
  std::vector<std::pair<double, double>> parts;
  for (const auto& iv : intervals) {
    double a = std::max(iv.lo, lo), b = std::min(iv.hi, hi);
    if (b > a) parts.emplace_back(a, b);
  }
  std::sort(parts.begin(), parts.end());
  double total = 0.0, cur_lo = 0.0, cur_hi = -1.0;
  bool open = false;
  for (auto [a, b] : parts) {
    if (!open || a > cur_hi) {
      if (open) total += cur_hi - cur_lo;
      cur_lo = a;
      cur_hi = b;
      open = true;
    } else {
      cur_hi = std::max(cur_hi, b);
    }
  }
  if (open) total += cur_hi - cur_lo;
  return total;
}

DataCenter::DataCenter(const Grid& grid, DataCenterOptions opts) : grid_(grid), opts_(opts) {
  grid_.validate();
  if (!(opts_.epsilon >= 0.0 && opts_.epsilon < 1.0)) throw ConfigError("epsilon must lie in [0, 1)");
  if (!(opts_.dedup_tolerance >= 0.0)) throw ConfigError("dedup tolerance must be non-negative");
  for (std::size_t i = 0; i < grid_.lanes.size(); ++i) {
    LaneAccum acc;
    acc.o_d1 = CoverageMask::Constant(grid_.n_s, grid_.n_h, false);
    acc.o_d2 = CoverageMask::Constant(grid_.n_s, grid_.n_h, false);
    acc.density_sum = Eigen::MatrixXd::Zero(grid_.n_s, grid_.n_h);
    acc.hmean_sum = Eigen::MatrixXd::Zero(grid_.n_s, grid_.n_h);
    acc.density_n = Eigen::MatrixXi::Zero(grid_.n_s, grid_.n_h);
    acc.hmean_n = Eigen::MatrixXi::Zero(grid_.n_s, grid_.n_h);
    accum_.push_back(std::move(acc));
  }
}

void DataCenter::ingest(double time, std::span<const Message> batch) {
  // Batches may mix instants when replayed from a log; split them.
  std::size_t i = 0;
  while (i < batch.size()) {
    std::size_t j = i;
    while (j < batch.size() && batch[j].time == batch[i].time) ++j;
    process_instant(batch[i].time, batch.subspan(i, j - i));
    i = j;
  }
  (void)time;
}

void DataCenter::process_instant(double time, std::span<const Message> batch) {
  if (batch.empty() || time < 0.0 || time > grid_.t_len) return;
  if (last_time_ >= 0.0 && time > last_time_) {
    double gap = time - last_time_;
    sample_period_ = sample_period_ > 0.0 ? std::min(sample_period_, gap) : gap;
  }
  last_time_ = time;
  const int h = grid_.cell_of(time, 0.0).h;
  const double dx = grid_.dx();
  const double need = (1.0 - opts_.epsilon) * dx;
  const std::size_t n_lanes = grid_.lanes.size();
  ++diag_.instants;
  diag_.messages += batch.size();

  std::vector<std::vector<CoverageInterval>> d1(n_lanes), d2(n_lanes);
  std::vector<DetectionRecord> records;
  for (const auto& m : batch) {
    double front = std::numeric_limits<double>::quiet_NaN();
    std::optional<double> rear;
    for (const auto& c : m.coverage) {
      int li = grid_.lane_index(c.lane);
      if (li < 0) continue;
      if (c.sensor == Source::D2) d2[static_cast<std::size_t>(li)].push_back(c);
      else d1[static_cast<std::size_t>(li)].push_back(c);
      if (c.sensor == Source::D1) front = c.hi;
    }
    for (const auto& r : m.payload) {
      records.push_back(r);
      if (r.source == Source::D1Rear) rear = r.x;
    }
    diag_.records_in += m.payload.size();
    auto self = std::find_if(m.payload.begin(), m.payload.end(),
                             [](const DetectionRecord& r) { return r.source == Source::Self; });
    if (self != m.payload.end()) {
      if (std::isnan(front)) front = self->x + opts_.lrr_range;
      av_samples_[m.reporter_id].push_back(
          {time, self->lane, self->x, self->speed.value_or(0.0), front, opts_.rear_lrr ? rear : std::nullopt});
    }
  }

  auto merged = deduplicate(std::span<const DetectionRecord>(records), opts_.dedup_tolerance);
  diag_.records_merged += merged.size();

  auto covered_segments = [&](const std::vector<CoverageInterval>& ivs) {
    std::vector<double> cover(static_cast<std::size_t>(grid_.n_s), 0.0);
    if (ivs.empty()) return cover;
    std::vector<std::pair<double, double>> parts;
    for (const auto& iv : ivs) {
      double a = std::max(iv.lo, 0.0), b = std::min(iv.hi, grid_.x_len);
      if (b > a) parts.emplace_back(a, b);
    }
    std::sort(parts.begin(), parts.end());
    std::vector<std::pair<double, double>> uni;
    for (auto p : parts) {
      if (!uni.empty() && p.first <= uni.back().second) uni.back().second = std::max(uni.back().second, p.second);
      else uni.push_back(p);
    }
    for (auto [a, b] : uni) {
      int s0 = std::min(static_cast<int>(a / dx), grid_.n_s - 1), s1 = std::min(static_cast<int>(b / dx), grid_.n_s - 1);
      for (int s = s0; s <= s1; ++s) {
        double lo = std::max(a, s * dx), hi = std::min(b, (s + 1) * dx);
        if (hi > lo) cover[static_cast<std::size_t>(s)] += hi - lo;
      }
    }
    return cover;
  };

  auto inside_union = [](const std::vector<CoverageInterval>& ivs, double x) {
    for (const auto& iv : ivs)
      if (x >= iv.lo && x <= iv.hi) return true;
    return false;
  };

  for (std::size_t li = 0; li < n_lanes; ++li) {
    auto& acc = accum_[li];
    auto c1 = covered_segments(d1[li]);
    for (int s = 0; s < grid_.n_s; ++s)
      if (c1[static_cast<std::size_t>(s)] >= need) acc.o_d1(s, h) = true;

    if (opts_.level == Perception::S1 || d2[li].empty()) continue;
    auto c2 = covered_segments(d2[li]);
    const int lane = grid_.lanes[li];
    auto lane_lo = std::lower_bound(merged.begin(), merged.end(), lane,
                                    [](const MergedRecord& r, int l) { return r.lane < l; });
    auto lane_hi = std::upper_bound(lane_lo, merged.end(), lane,
                                    [](int l, const MergedRecord& r) { return l < r.lane; });
    for (int s = 0; s < grid_.n_s; ++s) {
      if (c2[static_cast<std::size_t>(s)] < need) continue;
      acc.o_d2(s, h) = true;
      const double lo = s * dx, hi = (s + 1) * dx;
      const bool last = s == grid_.n_s - 1;
      std::vector<MergedRecord> in_cell;
      for (auto it = lane_lo; it != lane_hi; ++it) {
        if (it->x < lo || it->x > hi || (it->x == hi && !last)) continue;
        if (!inside_union(d2[li], it->x)) continue;
        in_cell.push_back(*it);
      }
      acc.density_sum(s, h) += static_cast<double>(in_cell.size()) / dx;
      acc.density_n(s, h) += 1;
      if (opts_.level == Perception::S3) {
        double inv = 0.0;
        int n = 0;
        for (const auto& r : in_cell) {
          if (!r.speed) continue;
          double v = *r.speed;
          if (v < opts_.speed_floor) {
            v = opts_.speed_floor;
            ++diag_.speed_floored;
          }
          inv += 1.0 / v;
          ++n;
        }
        if (n > 0) {
          acc.hmean_sum(s, h) += n / inv;
          acc.hmean_n(s, h) += 1;
        }
      }
      if (opts_.keep_snapshots) snapshots_.push_back({lane, s, time, std::move(in_cell)});
    }
  }
}

ObservationSet DataCenter::finalize() {
  CellSums sums(grid_);
  const double period = sample_period_ > 0.0 ? sample_period_ : 1.0;
  auto flush = [&](VehicleTrack& tr) {
    if (tr.points.size() >= 2) accumulate_track(tr, sums);
    tr.points.clear();
  };
  for (const auto& [id, samples] : av_samples_) {
    VehicleTrack own{id, {}}, follower{id + "/rear", {}};
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto& smp = samples[i];
      if (i > 0 && smp.t - samples[i - 1].t > 1.5 * period) {
        flush(own);
        flush(follower);
      }
      TrackPoint p;
      p.time = smp.t;
      p.x = smp.x;
      p.lane = smp.lane;
      p.speed = smp.speed;
      double head = smp.front - smp.x;
      if (head > 0.0) p.space_headway = head;
      own.points.push_back(p);

      if (smp.rear_x && smp.x - *smp.rear_x > 0.0) {
        TrackPoint q;
        q.time = smp.t;
        q.x = *smp.rear_x;
        q.lane = smp.lane;
        q.space_headway = smp.x - *smp.rear_x;
        follower.points.push_back(q);
      } else {
        flush(follower);
      }
    }
    flush(own);
    flush(follower);
  }

  ObservationSet out;
  out.level = opts_.level;
  out.grid = grid_;
  for (std::size_t li = 0; li < grid_.lanes.size(); ++li) {
    const int lane = grid_.lanes[li];
    auto& acc = accum_[li];
    ObservationLane ol{lane, acc.o_d1, acc.o_d2, CellField(lane, Quantity::Density, grid_.n_s, grid_.n_h),
                       CellField(lane, Quantity::Speed, grid_.n_s, grid_.n_h)};
    auto put_speed = [&](int s, int h, double v) {
      double c = std::clamp(v, opts_.speed_floor, opts_.speed_cap);
      if (c != v) ++diag_.speed_clipped;
      ol.v_obs.set(s, h, c);
    };
    for (int s = 0; s < grid_.n_s; ++s)
      for (int h = 0; h < grid_.n_h; ++h) {
        if (acc.o_d1(s, h)) {
          double d = sums.d[li](s, h), t = sums.t[li](s, h), a = sums.a[li](s, h);
          if (t > 0.0 && a > 0.0) {
            ol.k_obs.set(s, h, t / a);
            put_speed(s, h, d / t);
          } else {
            ++diag_.d1_zero_denominator;
          }
        } else if (opts_.level != Perception::S1 && acc.o_d2(s, h) && acc.density_n(s, h) > 0) {
          ol.k_obs.set(s, h, acc.density_sum(s, h) / acc.density_n(s, h));
          if (opts_.level == Perception::S3 && acc.hmean_n(s, h) > 0)
            put_speed(s, h, acc.hmean_sum(s, h) / acc.hmean_n(s, h));
        }
      }
    out.lanes.push_back(std::move(ol));
  }
  out.diagnostics = diag_;
  out.snapshots = std::move(snapshots_);
  return out;
}

ObservationSet observe(std::span<const Message> messages, const Grid& grid, const DataCenterOptions& opts) {
  DataCenter dc(grid, opts);
  dc.ingest(0.0, messages);
  return dc.finalize();
}

ObservationSet observe_s1(std::span<const Message> messages, const Grid& grid, DataCenterOptions opts) {
  opts.level = Perception::S1;
  return observe(messages, grid, opts);
}

ObservationSet observe_s2(std::span<const Message> messages, const Grid& grid, DataCenterOptions opts) {
  opts.level = Perception::S2;
  return observe(messages, grid, opts);
}

ObservationSet observe_s3(std::span<const Message> messages, const Grid& grid, DataCenterOptions opts) {
  opts.level = Perception::S3;
  return observe(messages, grid, opts);
}

CoverageSets coverage_sets(std::span<const Message> messages, const Grid& grid, double epsilon) {
  DataCenterOptions opts;
  opts.epsilon = epsilon;
  opts.level = Perception::S3;
  auto obs = observe(messages, grid, opts);
  CoverageSets out;
  for (auto& l : obs.lanes) {
    out.o_d1.push_back(l.o_d1);
    out.o_d2.push_back(l.o_d2);
  }
  return out;
}

}  // namespace avtse
