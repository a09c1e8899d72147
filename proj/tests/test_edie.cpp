#include <doctest.h>

#include <cmath>

#include "edie.hpp"
#include "helpers.hpp"
#include "rng.hpp"

using namespace avtse;

TEST_CASE("square band clipped to a cell") {
  auto band = HeadwayBand::from_polygon({{0, 0}, {4, 0}, {4, 4}, {0, 4}});
  CHECK(clip_band_to_cell(band, Rect{0, 2, 0, 2}) == doctest::Approx(4.0));
  CHECK(clip_band_to_cell(band, Rect{10, 12, 10, 12}) == 0.0);
  CHECK(clip_band_to_cell(band, Rect{-1, 10, -1, 10}) == doctest::Approx(16.0));
  CHECK(polygon_area(std::vector<TsPoint>{{0, 0}, {4, 0}, {4, 4}, {0, 4}}) == doctest::Approx(16.0));
}

TEST_CASE("band area agrees with Monte-Carlo sampling") {
  auto tr = testutil::straight("v", 1, 0, 20, 0, 10);
  for (auto& p : tr.points) p.space_headway = 20.0;
  auto bands = headway_bands(tr);
  REQUIRE(bands.size() == 1);
  for (Rect cell : {Rect{5, 15, 50, 60}, Rect{0, 10, 0, 10}, Rect{3, 13, 40, 50}}) {
    double area = clip_band_to_cell(bands[0], cell);
    Rng rng(42);
    const int n = 400000;
    int hit = 0;
    for (int i = 0; i < n; ++i) {
      double t = rng.uniform(cell.t0, cell.t1), x = rng.uniform(cell.x0, cell.x1);
      if (x >= 10 * t && x <= 10 * t + 20) ++hit;
    }
    double mc = cell.area() * hit / n;
    CHECK(area > 0.0);
    CHECK(std::abs(area - mc) / area < 0.005);
  }
}

TEST_CASE("segment crossing contributes distance and time") {
  auto ts = testutil::make_set({testutil::straight("a", 1, 0, 10, 0, 10)}, 10, 100, 1, 10);
  auto contrib = cell_contributions(ts);
  REQUIRE(contrib.size() == 10);
  for (const auto& c : contrib) {
    CHECK(c.t == doctest::Approx(1.0));
    CHECK(c.d == doctest::Approx(10.0));
  }
}

TEST_CASE("lane change partitions residence time") {
  auto tr = testutil::straight("a", 1, 0, 10, 0, 1);
  for (auto& p : tr.points)
    if (p.time > 4.95) p.lane = 2;
  auto ts = testutil::make_set({tr}, 10, 10, 1, 1);
  auto contrib = cell_contributions(ts);
  REQUIRE(contrib.size() == 2);
  CHECK(contrib[0].lane != contrib[1].lane);
  CHECK(contrib[0].t + contrib[1].t == doctest::Approx(10.0));
  CHECK(contrib[0].d + contrib[1].d == doctest::Approx(10.0));
}

namespace {
// Cells fully behind the platoon leader, ahead of the last vehicle and one
// spacing past the entrance.
bool interior(const Grid& g, int h, int s) {
  double t0 = h * g.dt_h(), t1 = (h + 1) * g.dt_h(), x0 = s * g.dx(), x1 = (s + 1) * g.dx();
  return x1 <= 10.0 * t0 && x0 >= 10.0 * (t1 - 58.0) && x0 >= 20.0;
}
}  // namespace

TEST_CASE("headway bands tile the platoon interior") {
  auto ts = synth_platoon(testutil::uniform_platoon(), 1);
  CellSums sums(ts.grid);
  for (const auto& tr : ts.tracks) accumulate_track(tr, sums);
  int n = 0;
  for (int h = 0; h < ts.grid.n_h; ++h)
    for (int s = 0; s < ts.grid.n_s; ++s)
      if (interior(ts.grid, h, s)) {
        ++n;
        CHECK(sums.a[0](s, h) == doctest::Approx(ts.grid.cell_area()).epsilon(0.01));
      }
  CHECK(n > 20);
}

TEST_CASE("uniform flow gives analytic states") {
  auto ts = synth_platoon(testutil::uniform_platoon(), 1);
  auto gt = ground_truth(ts);
  REQUIRE(gt.size() == 1);
  int n = 0;
  for (int h = 0; h < ts.grid.n_h; ++h)
    for (int s = 0; s < ts.grid.n_s; ++s) {
      if (!interior(ts.grid, h, s)) continue;
      ++n;
      CHECK(std::abs(gt[0].density.values(s, h) * 1000.0 / 50.0 - 1.0) < 1e-6);
      CHECK(std::abs(gt[0].speed.values(s, h) * 3.6 / 36.0 - 1.0) < 1e-6);
      CHECK(std::abs(gt[0].flow.values(s, h) * 3600.0 / 1800.0 - 1.0) < 1e-6);
    }
  CHECK(n > 20);
}

TEST_CASE("empty road is fully masked") {
  Grid g;
  g.t_len = 10;
  g.x_len = 100;
  g.n_h = 2;
  g.n_s = 3;
  g.lanes = {1, 2};
  auto st = states_from_sums(CellSums(g));
  REQUIRE(st.size() == 2);
  for (const auto& l : st) {
    CHECK(l.density.defined_count() == 0);
    CHECK(l.speed.defined_count() == 0);
    CHECK(l.flow.defined_count() == 0);
  }
}

TEST_CASE("speed times density equals flow on every defined cell") {
  auto cfg = testutil::uniform_platoon();
  cfg.lanes = 2;
  cfg.headway_dist = HeadwayDistribution::ShiftedExponential;
  cfg.slowdown = Slowdown{20, 30, 3, 100, 150};
  auto ts = synth_platoon(cfg, 9);
  int n = 0;
  for (const auto& l : ground_truth(ts))
    for (int h = 0; h < l.flow.cols(); ++h)
      for (int s = 0; s < l.flow.rows(); ++s) {
        if (!l.flow.defined(s, h)) continue;
        ++n;
        double q = l.flow.values(s, h), kv = l.density.values(s, h) * l.speed.values(s, h);
        CHECK(std::abs(kv - q) <= 1e-9 * std::abs(q));
      }
  CHECK(n > 50);
}

TEST_CASE("slowdown zone shows the imposed speed") {
  auto cfg = testutil::uniform_platoon();
  cfg.vehicles_per_lane = 60;
  cfg.duration = 120;
  cfg.n_h = 12;
  cfg.slowdown = Slowdown{20, 60, 2.0, 100, 200};
  auto ts = synth_platoon(cfg, 1);
  auto gt = ground_truth(ts);
  const auto& g = ts.grid;
  int n = 0;
  for (int h = 0; h < g.n_h; ++h)
    for (int s = 0; s < g.n_s; ++s) {
      double t0 = h * g.dt_h(), t1 = (h + 1) * g.dt_h(), x0 = s * g.dx();
      if (t0 < 30 || t1 > 80 || x0 < 110 || !gt[0].speed.defined(s, h)) continue;
      ++n;
      CHECK(gt[0].speed.values(s, h) == doctest::Approx(2.0).epsilon(1e-6));
    }
  CHECK(n > 10);
}
