#include <doctest.h>

#include "datacenter.hpp"
#include "helpers.hpp"

using namespace avtse;
using testutil::straight;

namespace {
DetectionRecord rec(int lane, double x, std::optional<double> v = std::nullopt, Source s = Source::D2) {
  return {"r", "", 0.0, lane, x, v, s};
}

Grid one_lane(double t_len, double x_len, int n_h, int n_s) {
  Grid g;
  g.t_len = t_len;
  g.x_len = x_len;
  g.n_h = n_h;
  g.n_s = n_s;
  g.lanes = {1};
  return g;
}
}  // namespace

TEST_CASE("deduplication") {
  std::vector<DetectionRecord> a{rec(1, 100.0), rec(1, 100.8)};
  auto m = deduplicate(std::span<const DetectionRecord>(a), 2.0);
  REQUIRE(m.size() == 1);
  CHECK(m[0].x == doctest::Approx(100.4));
  CHECK(m[0].multiplicity == 2);

  std::vector<DetectionRecord> b{rec(1, 100.0), rec(1, 103.0)};
  CHECK(deduplicate(std::span<const DetectionRecord>(b), 2.0).size() == 2);

  std::vector<DetectionRecord> c{rec(1, 50.3, 9.0), rec(1, 50.0, 7.0, Source::Self), rec(1, 51.0, 8.0, Source::D1)};
  auto s = deduplicate(std::span<const DetectionRecord>(c), 2.0);
  REQUIRE(s.size() == 1);
  CHECK(s[0].x == 50.0);
  CHECK(*s[0].speed == 7.0);
  CHECK(s[0].source == Source::Self);

  // same position on different lanes stays apart
  std::vector<DetectionRecord> d{rec(1, 10.0), rec(2, 10.0)};
  CHECK(deduplicate(std::span<const DetectionRecord>(d), 2.0).size() == 2);
}

TEST_CASE("deduplication is idempotent") {
  std::vector<DetectionRecord> a;
  for (double x : {0.0, 1.5, 3.0, 4.4, 10.0, 11.0, 30.0}) a.push_back(rec(1, x, x));
  auto once = deduplicate(std::span<const DetectionRecord>(a), 2.0);
  auto twice = deduplicate(std::span<const MergedRecord>(once), 2.0);
  REQUIRE(once.size() == twice.size());
  for (std::size_t i = 0; i < once.size(); ++i) CHECK(once[i].x == doctest::Approx(twice[i].x));
}

TEST_CASE("segment coverage") {
  using CI = CoverageInterval;
  std::vector<CI> a{{Source::D2, 1, 50, 150}};
  CHECK(covered_length(a, 100, 110) == doctest::Approx(10.0));
  std::vector<CI> b{{Source::D2, 1, 100, 109}};
  CHECK(covered_length(b, 100, 110) == doctest::Approx(9.0));
  CHECK(covered_length(b, 100, 110) < 0.95 * 10);
  std::vector<CI> c{{Source::D2, 1, 100, 105}, {Source::D2, 1, 104, 110}};
  CHECK(covered_length(c, 100, 110) == doctest::Approx(10.0));
}

TEST_CASE("single AV following at 20 m observes the analytic state") {
  auto ts = testutil::make_set({straight("a", 1, 0, 20, 0, 10), straight("b", 1, 0, 20, 20, 10)}, 20, 300, 2, 30);
  ts = derive_headways(ts);
  SensorConfig sc;
  sc.sampling_rate = 10;
  sc.missing_rate = 0;
  for (auto level : {Perception::S1, Perception::S3}) {
    sc.perception = level;
    auto msgs = emit_messages(ts, {"a"}, sc, 1);
    DataCenterOptions o;
    o.level = level;
    auto obs = observe(msgs, ts.grid, o);
    const auto& l = obs.lanes[0];
    CHECK(l.o_d1(5, 0));
    CHECK(l.k_obs.defined(5, 0));
    CHECK(l.k_obs.values(5, 0) == doctest::Approx(0.05).epsilon(1e-9));
    CHECK(l.v_obs.values(5, 0) == doctest::Approx(10.0).epsilon(1e-9));
    // behind the AV, never sensed
    CHECK(!l.k_obs.defined(0, 1));
    CHECK(!l.o_d1(0, 1));
  }
}

TEST_CASE("snapshot density and harmonic speed") {
  auto g = one_lane(10, 100, 1, 10);
  auto msg = [](double t, std::vector<std::pair<double, double>> xv) {
    Message m{"r", t, {{Source::D2, 1, 0, 100}}, {}};
    for (auto [x, v] : xv) m.payload.push_back({"r", "", t, 1, x, v, Source::D2});
    return m;
  };
  std::vector<Message> msgs{msg(1, {{12, 10}, {15, 30}}), msg(2, {{11, 20}, {14, 20}, {18, 20}})};
  auto obs = observe_s3(msgs, g);
  const auto& l = obs.lanes[0];
  CHECK(l.o_d2(1, 0));
  CHECK(!l.o_d1(1, 0));
  CHECK(l.k_obs.values(1, 0) == doctest::Approx(0.25));
  CHECK(l.v_obs.values(1, 0) == doctest::Approx(17.5));
  // covered but empty
  CHECK(l.k_obs.defined(5, 0));
  CHECK(l.k_obs.values(5, 0) == 0.0);
  CHECK(!l.v_obs.defined(5, 0));

  auto s2 = observe_s2(msgs, g);
  CHECK(s2.lanes[0].k_obs.values(1, 0) == doctest::Approx(0.25));
  CHECK(!s2.lanes[0].v_obs.defined(1, 0));

  auto s1 = observe_s1(msgs, g);
  CHECK(!s1.lanes[0].k_obs.defined(1, 0));
}

TEST_CASE("stopped vehicle speed is floored and logged") {
  auto g = one_lane(10, 100, 1, 10);
  std::vector<Message> msgs{{"r", 1, {{Source::D2, 1, 0, 100}}, {{"r", "", 1, 1, 12, 0.0, Source::D2}}}};
  auto obs = observe_s3(msgs, g);
  CHECK(obs.diagnostics.speed_floored == 1);
  CHECK(obs.lanes[0].v_obs.values(1, 0) == doctest::Approx(0.1));
}

TEST_CASE("coverage grows with the perception level") {
  auto cfg = testutil::uniform_platoon();
  cfg.lanes = 2;
  cfg.headway_dist = HeadwayDistribution::ShiftedExponential;
  auto ts = synth_platoon(cfg, 2);
  ts = derive_headways(ts);
  SensorConfig sc;
  auto msgs = emit_messages(ts, select_avs(ts, 0.2, 1), sc, 1);
  auto cov = coverage_sets(msgs, ts.grid, 0.05);
  DataCenterOptions o;
  auto s1 = observe_s1(msgs, ts.grid, o), s2 = observe_s2(msgs, ts.grid, o), s3 = observe_s3(msgs, ts.grid, o);
  for (std::size_t l = 0; l < 2; ++l) {
    auto d1 = s1.lanes[l].k_obs.mask, d2 = s2.lanes[l].k_obs.mask, d3 = s3.lanes[l].k_obs.mask;
    CHECK((d1 && !d2).count() == 0);
    CHECK((d2 && !d3).count() == 0);
    CHECK(d2.count() > d1.count());
    CHECK((cov.o_d1[l] == s3.lanes[l].o_d1).all());
  }
}

TEST_CASE("invalid options") {
  auto g = one_lane(10, 100, 1, 10);
  DataCenterOptions o;
  o.epsilon = 1.0;
  CHECK_THROWS(DataCenter(g, o));
  o.epsilon = 0.05;
  o.dedup_tolerance = -1;
  CHECK_THROWS(DataCenter(g, o));
}
