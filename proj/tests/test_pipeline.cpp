#include <doctest.h>

#include <filesystem>

#include "errors.hpp"
#include "pipeline.hpp"

using namespace avtse;
namespace fs = std::filesystem;

namespace {
ExperimentConfig small(const std::string& out) {
  ExperimentConfig c;
  for (const char* kv : {"synthetic.vehicles_per_lane=70", "synthetic.road_length=300", "synthetic.duration=200",
                         "synthetic.slowdown.start=50", "synthetic.slowdown.duration=60",
                         "synthetic.slowdown.x_from=200", "synthetic.slowdown.x_to=230", "grid.n_h=20",
                         "grid.n_s=15", "experiment.penetration=0.2"})
    apply_override(c, kv);
  c.output_dir = out;
  return c;
}

fs::path tmp(const std::string& name) {
  auto p = fs::temp_directory_path() / ("avtse_test_" + name);
  fs::remove_all(p);
  return p;
}
}  // namespace

TEST_CASE("field csv round trip") {
  CellField f(2, Quantity::Speed, 3, 4);
  f.set(0, 0, 1.25);
  f.set(2, 3, 1e-17);
  f.set(1, 2, 0.1 + 0.2);
  auto text = format_field(f);
  auto back = parse_field(text, 2, Quantity::Speed, 3, 4);
  CHECK((back.mask == f.mask).all());
  CHECK(back.values == f.values);
  CHECK_THROWS(parse_field(text, 2, Quantity::Speed, 4, 4));
}

TEST_CASE("grid json round trip") {
  Grid g;
  g.t_len = 123.4;
  g.x_len = 567.8;
  g.n_h = 9;
  g.n_s = 7;
  g.lanes = {1, 3};
  CHECK(grid_from_json(grid_to_json(g)) == g);
}

TEST_CASE("pipeline writes artifacts and is deterministic") {
  auto dir = tmp("run");
  auto cfg = small(dir.string());
  cfg.seeds = {1, 2};
  auto a = run_pipeline(cfg);
  for (const char* f : {"report.json", "summary.txt", "config.json", "truth/lane_1_density.csv",
                        "seed_1/observed/lane_2_coverage.csv", "seed_1/observed/coverage.json",
                        "seed_2/estimate/lane_3_speed.csv", "seed_2/estimate/coefficients.csv",
                        "seed_1/estimate/models.json", "seed_1/report.json"})
    CHECK_MESSAGE(fs::exists(dir / f), f);
  CHECK(a.runs.size() == 2);
  CHECK(a.aggregate.extra.contains("std"));
  CHECK(a.aggregate.config == cfg.to_json());

  auto b = run_pipeline(cfg, nullptr, false);
  CHECK(deterministic_view(a.aggregate) == deterministic_view(b.aggregate));

  // a run is reproducible from its echoed config
  auto echoed = config_from_json(a.aggregate.config);
  auto c = run_pipeline(echoed, nullptr, false);
  CHECK(deterministic_view(c.aggregate) == deterministic_view(a.aggregate));
  fs::remove_all(dir);
}

TEST_CASE("message log replay matches live sensing") {
  auto cfg = small("unused");
  auto data = load_data(cfg);
  auto dir = tmp("replay");
  fs::create_directories(dir);
  auto log = (dir / "messages.jsonl").string();
  auto live = sense(cfg, data.tracks, 3, nullptr, log);
  auto replay = observe_log(cfg, data.tracks.grid, log);
  REQUIRE(live.lanes.size() == replay.lanes.size());
  for (std::size_t l = 0; l < live.lanes.size(); ++l) {
    CHECK((live.lanes[l].k_obs.mask == replay.lanes[l].k_obs.mask).all());
    CHECK((live.lanes[l].k_obs.values - replay.lanes[l].k_obs.values).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((live.lanes[l].v_obs.values - replay.lanes[l].v_obs.values).cwiseAbs().maxCoeff() < 1e-9);
  }
  fs::remove_all(dir);
}

TEST_CASE("sweep rows and recorded failures") {
  auto cfg = small("unused");
  cfg.seeds = {1, 2, 3};
  auto data = load_data(cfg);
  auto res = run_sweep(cfg, {"penetration", {"0.03", "0.05", "0.1", "0.3", "0.7"}}, &data);
  CHECK(res.rows == 15);
  CHECK(res.failed == 0);
  CHECK(std::count(res.table.begin(), res.table.end(), '\n') == 16);

  cfg.seeds = {1};
  auto bad = run_sweep(cfg, {"penetration", {"0.1", "1.5", "abc"}}, &data);
  CHECK(bad.rows == 1);
  CHECK(bad.failed == 2);
  CHECK(bad.failures.find("1.5") != std::string::npos);
  CHECK_THROWS_AS(run_sweep(cfg, {"lane_count", {"1"}}, &data), StageError);
}

TEST_CASE("platoon scenarios") {
  auto cfg = small("unused");
  auto data = load_data(cfg);
  auto p = run_platoon(cfg, {1}, &data, false);
  CHECK(p.av_count > 0);
  CHECK(p.dedicated.extra["av_count"] == p.uniform.extra["av_count"]);
  CHECK(p.dedicated.extra["av_count"] == p.av_count);

  auto all = run_platoon(cfg, {1, 2, 3}, &data, false);
  auto full = cfg;
  full.penetration = 1.0;
  auto ref = run_pipeline(full, &data, false);
  CHECK(all.dedicated.density.smape1 == doctest::Approx(ref.aggregate.density.smape1));
  CHECK(all.dedicated.speed.smape1 == doctest::Approx(ref.aggregate.speed.smape1));

  for (std::vector<int> lanes : {std::vector<int>{}, std::vector<int>{9}}) {
    try {
      run_platoon(cfg, lanes, &data, false);
      FAIL("no error");
    } catch (const StageError& e) {
      CHECK(e.kind() == ErrorKind::Config);
      CHECK(e.stage() == "config");
    }
  }
}

TEST_CASE("stage errors name the stage") {
  ExperimentConfig cfg;
  cfg.data.source = "csv";
  cfg.data.path = "/nonexistent/file.csv";
  try {
    run_pipeline(cfg, nullptr, false);
    FAIL("no error");
  } catch (const StageError& e) {
    CHECK(e.stage() == "ingest");
    CHECK(e.kind() == ErrorKind::Io);
  }
  cfg.data.path = "";
  try {
    run_pipeline(cfg, nullptr, false);
    FAIL("no error");
  } catch (const StageError& e) {
    CHECK(e.stage() == "config");
  }
}
