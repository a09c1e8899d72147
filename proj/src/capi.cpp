#include "avtse/avtse.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <new>
#include <string>

#include "csv.hpp"
#include "errors.hpp"
#include "pipeline.hpp"

struct avtse_config {
  avtse::ExperimentConfig cfg;
};
struct avtse_tracks {
  avtse::TrackSet ts;
};
struct avtse_report {
  avtse::EvalReport report;
};

namespace {

thread_local std::string g_error;
thread_local std::string g_stage;

avtse_status to_status(avtse::ErrorKind k) {
  switch (k) {
    case avtse::ErrorKind::Schema: return AVTSE_E_SCHEMA;
    case avtse::ErrorKind::Data: return AVTSE_E_DATA;
    case avtse::ErrorKind::Bounds: return AVTSE_E_BOUNDS;
    case avtse::ErrorKind::Config: return AVTSE_E_CONFIG;
    case avtse::ErrorKind::Estimation: return AVTSE_E_ESTIMATION;
    case avtse::ErrorKind::Metric: return AVTSE_E_METRIC;
    case avtse::ErrorKind::Io: return AVTSE_E_IO;
  }
  return AVTSE_E_INTERNAL;
}

avtse_status fail(avtse_status s, const std::string& msg, const std::string& stage = {}) {
  g_error = msg;
  g_stage = stage;
  return s;
}

template <class F>
avtse_status guard(F&& f) {
  g_error.clear();
  g_stage.clear();
  try {
    f();
    return AVTSE_OK;
  } catch (const avtse::StageError& e) {
    return fail(to_status(e.kind()), e.what(), e.stage());
  } catch (const avtse::Error& e) {
    return fail(to_status(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(AVTSE_E_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(AVTSE_E_INTERNAL, e.what());
  } catch (...) {
    return fail(AVTSE_E_INTERNAL, "unknown error");
  }
}

char* dup(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

#define REQUIRE(cond, what) \
  if (!(cond)) return fail(AVTSE_E_INVALID_ARG, what)

}  // namespace

extern "C" {

const char* avtse_version(void) { return "0.1.0"; }

const char* avtse_status_string(avtse_status s) {
  switch (s) {
    case AVTSE_OK: return "ok";
    case AVTSE_E_INVALID_ARG: return "invalid argument";
    case AVTSE_E_SCHEMA: return "schema error";
    case AVTSE_E_DATA: return "data error";
    case AVTSE_E_CONFIG: return "config error";
    case AVTSE_E_BOUNDS: return "bounds error";
    case AVTSE_E_ESTIMATION: return "estimation error";
    case AVTSE_E_METRIC: return "metric error";
    case AVTSE_E_IO: return "i/o error";
    case AVTSE_E_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* avtse_last_error(void) { return g_error.c_str(); }
const char* avtse_last_stage(void) { return g_stage.c_str(); }

void avtse_string_free(char* s) { std::free(s); }

avtse_status avtse_config_new(avtse_config** out) {
  REQUIRE(out, "out is null");
  return guard([&] { *out = new avtse_config{}; });
}

avtse_status avtse_config_load_toml(const char* path, avtse_config** out) {
  REQUIRE(path && out, "path or out is null");
  return guard([&] { *out = new avtse_config{avtse::load_config_toml(path)}; });
}

avtse_status avtse_config_parse_toml(const char* text, avtse_config** out) {
  REQUIRE(text && out, "text or out is null");
  return guard([&] { *out = new avtse_config{avtse::parse_config_toml(text)}; });
}

avtse_status avtse_config_set(avtse_config* cfg, const char* key, const char* value) {
  REQUIRE(cfg && key && value, "cfg, key or value is null");
  return guard([&] { cfg->cfg.set(key, value); });
}

avtse_status avtse_config_to_json(const avtse_config* cfg, char** json) {
  REQUIRE(cfg && json, "cfg or json is null");
  return guard([&] { *json = dup(cfg->cfg.to_json().dump(2)); });
}

void avtse_config_free(avtse_config* cfg) { delete cfg; }

avtse_status avtse_tracks_load(const avtse_config* cfg, avtse_tracks** out) {
  REQUIRE(cfg && out, "cfg or out is null");
  return guard([&] { *out = new avtse_tracks{avtse::load_tracks(cfg->cfg)}; });
}

avtse_status avtse_tracks_write_csv(const avtse_tracks* tracks, const char* path) {
  REQUIRE(tracks && path, "tracks or path is null");
  return guard([&] { avtse::write_trajectories(tracks->ts, path); });
}

avtse_status avtse_tracks_count(const avtse_tracks* tracks, size_t* vehicles, size_t* points) {
  REQUIRE(tracks, "tracks is null");
  return guard([&] {
    std::size_t n = 0;
    for (const auto& t : tracks->ts.tracks) n += t.points.size();
    if (vehicles) *vehicles = tracks->ts.tracks.size();
    if (points) *points = n;
  });
}

void avtse_tracks_free(avtse_tracks* tracks) { delete tracks; }

avtse_status avtse_ground_truth(const avtse_config* cfg, const char* out_dir) {
  REQUIRE(cfg && out_dir, "cfg or out_dir is null");
  return guard([&] {
    auto data = avtse::load_data(cfg->cfg);
    avtse::write_truth(out_dir, data);
  });
}

avtse_status avtse_sense(const avtse_config* cfg, const char* out_dir) {
  REQUIRE(cfg && out_dir, "cfg or out_dir is null");
  return guard([&] {
    auto ts = avtse::load_tracks(cfg->cfg);
    std::filesystem::create_directories(out_dir);
    auto log = (std::filesystem::path(out_dir) / "messages.jsonl").string();
    auto obs = avtse::sense(cfg->cfg, ts, cfg->cfg.seeds.front(), nullptr, log);
    avtse::write_observation(out_dir, obs);
  });
}

avtse_status avtse_estimate(const avtse_config* cfg, const char* sense_dir, const char* out_dir) {
  REQUIRE(cfg && sense_dir && out_dir, "cfg, sense_dir or out_dir is null");
  return guard([&] {
    auto grid = avtse::read_grid(sense_dir);
    auto obs = avtse::observe_log(cfg->cfg, grid, (std::filesystem::path(sense_dir) / "messages.jsonl").string());
    auto est = avtse::estimate(cfg->cfg, obs, cfg->cfg.seeds.front());
    avtse::write_estimation(out_dir, est, grid);
  });
}

avtse_status avtse_evaluate(const char* truth_dir, const char* estimate_dir, avtse_report** out) {
  REQUIRE(truth_dir && estimate_dir && out, "truth_dir, estimate_dir or out is null");
  return guard([&] {
    auto grid = avtse::read_grid(truth_dir);
    auto egrid = avtse::read_grid(estimate_dir);
    if (!(grid.n_h == egrid.n_h && grid.n_s == egrid.n_s && grid.lanes == egrid.lanes))
      throw avtse::MetricError("truth and estimate grids differ");
    avtse::FieldSet truth{avtse::read_fields(truth_dir, grid, avtse::Quantity::Density),
                          avtse::read_fields(truth_dir, grid, avtse::Quantity::Speed)};
    avtse::FieldSet est{avtse::read_fields(estimate_dir, egrid, avtse::Quantity::Density),
                        avtse::read_fields(estimate_dir, egrid, avtse::Quantity::Speed)};
    auto r = avtse::evaluate(truth, est);
    r.extra["truth_dir"] = truth_dir;
    r.extra["estimate_dir"] = estimate_dir;
    *out = new avtse_report{std::move(r)};
  });
}

avtse_status avtse_run(const avtse_config* cfg, avtse_report** out) {
  REQUIRE(cfg && out, "cfg or out is null");
  return guard([&] { *out = new avtse_report{avtse::run_pipeline(cfg->cfg).aggregate}; });
}

avtse_status avtse_sweep(const avtse_config* cfg, const char* parameter, const char* values_csv, const char* out_csv,
                         size_t* rows, size_t* failed) {
  REQUIRE(cfg && parameter && values_csv && out_csv, "cfg, parameter, values or out_csv is null");
  return guard([&] {
    avtse::SweepSpec spec;
    spec.parameter = parameter;
    for (auto v : avtse::csv::split(values_csv))
      if (!v.empty()) spec.values.emplace_back(v);
    auto res = avtse::run_sweep(cfg->cfg, spec);
    auto parent = std::filesystem::path(out_csv).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    avtse::csv::write_file(out_csv, res.table);
    avtse::csv::write_file(std::string(out_csv) + ".failures.csv", res.failures);
    if (rows) *rows = res.rows;
    if (failed) *failed = res.failed;
  });
}

avtse_status avtse_platoon(const avtse_config* cfg, const int* lanes, size_t n_lanes, avtse_report** dedicated,
                           avtse_report** uniform) {
  REQUIRE(cfg && dedicated && uniform, "cfg or output is null");
  REQUIRE(lanes || n_lanes == 0, "lanes is null");
  return guard([&] {
    std::vector<int> l(lanes, lanes + n_lanes);
    auto res = avtse::run_platoon(cfg->cfg, l);
    *dedicated = new avtse_report{std::move(res.dedicated)};
    *uniform = new avtse_report{std::move(res.uniform)};
  });
}

avtse_status avtse_report_json(const avtse_report* report, char** json) {
  REQUIRE(report && json, "report or json is null");
  return guard([&] { *json = dup(avtse::report_to_json(report->report).dump(2)); });
}

avtse_status avtse_report_summary(const avtse_report* report, char** text) {
  REQUIRE(report && text, "report or text is null");
  return guard([&] { *text = dup(avtse::report_summary(report->report)); });
}

avtse_status avtse_report_metric(const avtse_report* report, int lane, const char* quantity, const char* metric,
                                 double* value) {
  REQUIRE(report && quantity && metric && value, "null argument");
  const std::string q(quantity), m(metric);
  REQUIRE(q == "density" || q == "speed", "quantity must be density or speed");
  REQUIRE(m == "nrmse" || m == "smape1" || m == "smape2", "metric must be nrmse, smape1 or smape2");
  const avtse::MetricTriple* t = nullptr;
  if (lane < 0) {
    t = q == "density" ? &report->report.density : &report->report.speed;
  } else {
    for (const auto& le : report->report.lanes)
      if (le.lane == lane) t = q == "density" ? &le.density : &le.speed;
    if (!t) return fail(AVTSE_E_INVALID_ARG, "lane not in report: " + std::to_string(lane));
  }
  *value = m == "nrmse" ? t->nrmse : (m == "smape1" ? t->smape1 : t->smape2);
  g_error.clear();
  return AVTSE_OK;
}

avtse_status avtse_report_write(const avtse_report* report, const char* path) {
  REQUIRE(report && path, "report or path is null");
  return guard([&] { avtse::csv::write_file(path, avtse::report_to_json(report->report).dump(2) + "\n"); });
}

void avtse_report_free(avtse_report* report) { delete report; }

}  // extern "C"
