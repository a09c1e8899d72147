#include "pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "csv.hpp"
#include "errors.hpp"
#include "rng.hpp"

namespace fs = std::filesystem;

namespace avtse {

namespace {

using Clock = std::chrono::steady_clock;

template <class F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(name, e);
  }
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

std::string join(const std::string& a, const std::string& b) { return (fs::path(a) / b).string(); }

void write_json(const std::string& path, const nlohmann::ordered_json& j) { csv::write_file(path, j.dump(2) + "\n"); }

}  // namespace

std::string format_field(const CellField& f) {
  std::string out;
  for (int s = 0; s < f.rows(); ++s) {
    for (int h = 0; h < f.cols(); ++h) {
      if (h) out += ',';
      if (f.defined(s, h)) out += csv::format_double(f.values(s, h));
    }
    out += '\n';
  }
  return out;
}

CellField parse_field(const std::string& text, int lane, Quantity q, int n_s, int n_h) {
  CellField f(lane, q, n_s, n_h);
  std::istringstream in(text);
  std::string line;
  int s = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (s >= n_s) {
      if (csv::trim(line).empty()) continue;
      throw DataError("matrix has more than " + std::to_string(n_s) + " rows");
    }
    auto cells = csv::split(line);
    if (static_cast<int>(cells.size()) != n_h)
      throw DataError("matrix row " + std::to_string(s) + " has " + std::to_string(cells.size()) + " columns, expected " +
                      std::to_string(n_h));
    for (int h = 0; h < n_h; ++h) {
      auto c = cells[static_cast<std::size_t>(h)];
      if (c.empty()) continue;
      double v = 0.0;
      if (!csv::parse_double(c, v)) throw DataError("bad matrix entry at row " + std::to_string(s));
      f.set(s, h, v);
    }
    ++s;
  }
  if (s != n_s) throw DataError("matrix has " + std::to_string(s) + " rows, expected " + std::to_string(n_s));
  return f;
}

std::string field_path(const std::string& dir, int lane, Quantity q) {
  return join(dir, "lane_" + std::to_string(lane) + "_" + quantity_name(q) + ".csv");
}

void write_fields(const std::string& dir, const std::vector<CellField>& fields) {
  ensure_dir(dir);
  for (const auto& f : fields) csv::write_file(field_path(dir, f.lane, f.quantity), format_field(f));
}

std::vector<CellField> read_fields(const std::string& dir, const Grid& grid, Quantity q) {
  std::vector<CellField> out;
  for (int lane : grid.lanes)
    out.push_back(parse_field(csv::read_file(field_path(dir, lane, q)), lane, q, grid.n_s, grid.n_h));
  return out;
}

nlohmann::ordered_json grid_to_json(const Grid& g) {
  return {{"t_len", g.t_len}, {"x_len", g.x_len}, {"n_h", g.n_h},
          {"n_s", g.n_s},     {"lanes", g.lanes}, {"lane_width", g.lane_width}};
}

Grid grid_from_json(const nlohmann::ordered_json& j) {
  Grid g;
  try {
    g.t_len = j.at("t_len").get<double>();
    g.x_len = j.at("x_len").get<double>();
    g.n_h = j.at("n_h").get<int>();
    g.n_s = j.at("n_s").get<int>();
    g.lanes = j.at("lanes").get<std::vector<int>>();
    g.lane_width = j.value("lane_width", 3.7);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed grid description: ") + e.what());
  }
  g.validate();
  return g;
}

void write_grid(const std::string& dir, const Grid& g) {
  ensure_dir(dir);
  write_json(join(dir, "grid.json"), grid_to_json(g));
}

Grid read_grid(const std::string& dir) {
  try {
    return grid_from_json(nlohmann::ordered_json::parse(csv::read_file(join(dir, "grid.json"))));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed grid.json: ") + e.what());
  }
}

TrackSet load_tracks(const ExperimentConfig& cfg) {
  return stage("ingest", [&] {
    cfg.validate();
    TrackSet ts;
    if (cfg.data.source == "synthetic") {
      SynthConfig sc = cfg.synthetic;
      sc.n_h = cfg.n_h;
      sc.n_s = cfg.n_s;
      sc.lane_width = cfg.lane_width;
      ts = synth_platoon(sc, cfg.synthetic_seed);
    } else {
      ParseOptions po;
      po.schema = cfg.data.schema == "ngsim" ? ColumnSchema::ngsim() : ColumnSchema::standard();
      po.unit_mode = cfg.data.unit_mode;
      po.dt_data = cfg.data.dt;
      po.time_offset = cfg.data.time_offset ? *cfg.data.time_offset : std::numeric_limits<double>::quiet_NaN();
      po.t_len = cfg.data.t_len;
      po.x_len = cfg.data.x_len;
      po.n_h = cfg.n_h;
      po.n_s = cfg.n_s;
      po.lane_width = cfg.lane_width;
      po.lanes = cfg.data.lanes;
      ts = parse_trajectories(cfg.data.path, po);
    }
    bool missing = false;
    for (const auto& tr : ts.tracks)
      for (const auto& p : tr.points)
        if (!p.space_headway) missing = true;
    if (missing) ts = derive_headways(ts);
    if (ts.tracks.empty()) throw DataError("no vehicle remains on the study region");
    return ts;
  });
}

DataBundle load_data(const ExperimentConfig& cfg) {
  DataBundle b;
  b.tracks = load_tracks(cfg);
  b.truth = stage("ground-truth", [&] { return ground_truth(b.tracks); });
  return b;
}

FieldSet truth_fields(const std::vector<LaneStates>& truth) {
  FieldSet fs;
  for (const auto& l : truth) {
    fs.density.push_back(l.density);
    fs.speed.push_back(l.speed);
  }
  return fs;
}

void write_truth(const std::string& dir, const DataBundle& data) {
  std::vector<CellField> all;
  for (const auto& l : data.truth) {
    all.push_back(l.density);
    all.push_back(l.speed);
    all.push_back(l.flow);
  }
  write_fields(dir, all);
  write_grid(dir, data.tracks.grid);
}

DataCenterOptions datacenter_options(const ExperimentConfig& cfg) {
  DataCenterOptions o;
  o.level = cfg.sensor.perception;
  o.dedup_tolerance = cfg.dedup_tolerance;
  o.epsilon = cfg.epsilon;
  o.lrr_range = cfg.sensor.lrr_range;
  o.rear_lrr = cfg.sensor.rear_lrr;
  return o;
}

ObservationSet sense(const ExperimentConfig& cfg, const TrackSet& ts, std::uint64_t seed,
                     const std::set<std::string>* avs, const std::string& messages_path, std::size_t* n_avs) {
  std::set<std::string> chosen = stage("av-selection", [&] {
    return avs ? *avs : select_avs(ts, cfg.penetration, substream(seed, Stream::AvSelection));
  });
  if (n_avs) *n_avs = chosen.size();
  SensorConfig sc = cfg.sensor;
  sc.lane_width = ts.grid.lane_width;
  std::ofstream log;
  if (!messages_path.empty()) {
    log.open(messages_path, std::ios::binary);
    if (!log) throw StageError("sensing", IoError("cannot write " + messages_path));
  }
  DataCenter dc = stage("data-center", [&] { return DataCenter(ts.grid, datacenter_options(cfg)); });
  stage("sensing", [&] {
    emit_messages(ts, chosen, sc, substream(seed, Stream::Sensing), [&](double t, std::vector<Message>&& batch) {
      if (log.is_open())
        for (const auto& m : batch) log << message_to_json_line(m) << '\n';
      dc.ingest(t, batch);
    });
    return 0;
  });
  if (log.is_open() && !log) throw StageError("sensing", IoError("write failed for " + messages_path));
  return stage("data-center", [&] { return dc.finalize(); });
}

ObservationSet observe_log(const ExperimentConfig& cfg, const Grid& grid, const std::string& messages_path) {
  return stage("data-center", [&] {
    std::ifstream in(messages_path, std::ios::binary);
    if (!in) throw IoError("cannot open " + messages_path);
    DataCenter dc(grid, datacenter_options(cfg));
    std::vector<Message> batch;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (csv::trim(line).empty()) continue;
      Message m;
      try {
        m = message_from_json_line(line);
      } catch (const std::exception& e) {
        throw DataError("messages line " + std::to_string(line_no) + ": " + e.what());
      }
      if (!batch.empty() && m.time != batch.front().time) {
        if (m.time < batch.front().time) throw DataError("message log is not ordered by time");
        dc.ingest(batch.front().time, batch);
        batch.clear();
      }
      batch.push_back(std::move(m));
    }
    if (!batch.empty()) dc.ingest(batch.front().time, batch);
    return dc.finalize();
  });
}

namespace {

std::string coverage_csv(const ObservationLane& l) {
  std::string out;
  for (Eigen::Index s = 0; s < l.o_d1.rows(); ++s) {
    for (Eigen::Index h = 0; h < l.o_d1.cols(); ++h) {
      if (h) out += ',';
      out += std::to_string((l.o_d1(s, h) ? 1 : 0) + (l.o_d2(s, h) ? 2 : 0));
    }
    out += '\n';
  }
  return out;
}

nlohmann::ordered_json observation_json(const ObservationSet& obs) {
  const auto& d = obs.diagnostics;
  nlohmann::ordered_json j;
  j["perception"] = perception_name(obs.level);
  j["diagnostics"] = {{"instants", d.instants},
                      {"messages", d.messages},
                      {"records_in", d.records_in},
                      {"records_merged", d.records_merged},
                      {"d1_zero_denominator", d.d1_zero_denominator},
                      {"speed_floored", d.speed_floored},
                      {"speed_clipped", d.speed_clipped}};
  auto lanes = nlohmann::ordered_json::array();
  for (const auto& l : obs.lanes)
    lanes.push_back({{"lane", l.lane},
                     {"o_d1_cells", l.o_d1.count()},
                     {"o_d2_cells", l.o_d2.count()},
                     {"density_observed", l.k_obs.defined_count()},
                     {"speed_observed", l.v_obs.defined_count()}});
  j["lanes"] = lanes;
  return j;
}

}  // namespace

void write_observation(const std::string& dir, const ObservationSet& obs) {
  std::vector<CellField> f;
  for (const auto& l : obs.lanes) {
    f.push_back(l.k_obs);
    f.push_back(l.v_obs);
  }
  write_fields(dir, f);
  write_grid(dir, obs.grid);
  for (const auto& l : obs.lanes)
    csv::write_file(join(dir, "lane_" + std::to_string(l.lane) + "_coverage.csv"), coverage_csv(l));
  write_json(join(dir, "coverage.json"), observation_json(obs));
}

Estimation estimate(const ExperimentConfig& cfg, const ObservationSet& obs, std::uint64_t seed) {
  Estimation est;
  const std::uint64_t vseed = substream(seed, Stream::Validation);
  stage("density-estimation", [&] {
    double sum = 0.0;
    std::size_t cnt = 0;
    for (const auto& l : obs.lanes)
      for (int s = 0; s < l.k_obs.rows(); ++s)
        for (int h = 0; h < l.k_obs.cols(); ++h)
          if (l.k_obs.defined(s, h)) {
            sum += l.k_obs.values(s, h);
            ++cnt;
          }
    if (cnt == 0) throw EstimationError("no cell was directly observed");
    for (const auto& l : obs.lanes) {
      CellField k(l.lane, Quantity::Density, l.k_obs.rows(), l.k_obs.cols());
      ImputeModel model;
      if (l.k_obs.defined_count() == 0) {
        model.method = ImputeMethod::NI;
        model.warnings.push_back("no observed density on this lane; filled with the mean over other lanes");
        for (int s = 0; s < k.rows(); ++s)
          for (int h = 0; h < k.cols(); ++h) k.set(s, h, sum / static_cast<double>(cnt));
      } else {
        auto mm = MaskedMatrix::from_field(l.k_obs);
        model = cv_select(mm, cfg.density_method, CvGrid{}, mix_seed(vseed, {static_cast<std::uint64_t>(l.lane), 1}));
        auto r = impute_with(mm, model);
        if (!r.note.empty()) model.warnings.push_back(r.note);
        for (int s = 0; s < k.rows(); ++s)
          for (int h = 0; h < k.cols(); ++h) k.set(s, h, r.values(s, h));
      }
      for (const auto& w : model.warnings) est.warnings.push_back("lane " + std::to_string(l.lane) + ": " + w);
      est.density.push_back(std::move(k));
      est.density_models.push_back(std::move(model));
    }
    return 0;
  });
  stage("speed-estimation", [&] {
    std::vector<CellField> v_obs;
    for (const auto& l : obs.lanes) v_obs.push_back(l.v_obs);
    SpeedOptions so;
    so.method = cfg.speed_method;
    so.seed = mix_seed(vseed, {2});
    est.speed_models = estimate_speed(v_obs, est.density, so);
    est.speed = est.speed_models.v_hat;
    for (const auto& r : est.speed_models.lanes)
      for (const auto& w : r.warnings) est.warnings.push_back("lane " + std::to_string(r.lane) + ": " + w);
    return 0;
  });
  stage("flow", [&] {
    for (std::size_t i = 0; i < est.density.size(); ++i) est.flow.push_back(flow_from_kv(est.density[i], est.speed[i]));
    return 0;
  });
  return est;
}

nlohmann::ordered_json estimation_json(const Estimation& est) {
  using J = nlohmann::ordered_json;
  J dens = J::array();
  for (std::size_t i = 0; i < est.density_models.size(); ++i) {
    const auto& m = est.density_models[i];
    J cv = J::array();
    for (const auto& c : m.cv_report) {
      if (m.method == ImputeMethod::KNN) cv.push_back({{"k", c.k}, {"smape1", c.score}});
      else cv.push_back({{"max_rank", c.max_rank}, {"lambda_frac", c.lambda_frac}, {"smape1", c.score}});
    }
    J e = {{"lane", est.density[i].lane}, {"method", impute_method_name(m.method)}};
    if (m.method == ImputeMethod::KNN) e["k"] = m.k;
    if (m.method == ImputeMethod::SI) {
      e["max_rank"] = m.max_rank;
      e["lambda_frac"] = m.lambda_frac;
      e["lambda"] = m.lambda;
    }
    e["cv"] = cv;
    dens.push_back(e);
  }
  J speed = J::array();
  for (const auto& r : est.speed_models.lanes) {
    J e = {{"lane", r.lane}, {"method", r.method}, {"fallback", r.fallback}, {"observed_cells", r.observed}};
    if (r.lasso.weights.size() > 0) {
      e["lambda"] = r.lambda;
      e["intercept"] = r.lasso.intercept;
      std::vector<double> w(r.lasso.weights.data(), r.lasso.weights.data() + r.lasso.weights.size());
      e["weights"] = w;
    }
    if (r.method == "RF1" || r.method == "RF2")
      e["forest"] = {{"n_trees", r.forest.n_trees}, {"max_depth", r.forest.max_depth}, {"min_leaf", r.forest.min_leaf}};
    J cv = J::array();
    for (const auto& [label, score] : r.cv) cv.push_back({{"candidate", label}, {"smape1", score}});
    e["cv"] = cv;
    speed.push_back(e);
  }
  return {{"density_models", dens}, {"speed_models", speed}, {"warnings", est.warnings}};
}

void write_estimation(const std::string& dir, const Estimation& est, const Grid& grid) {
  std::vector<CellField> all = est.density;
  all.insert(all.end(), est.speed.begin(), est.speed.end());
  all.insert(all.end(), est.flow.begin(), est.flow.end());
  write_fields(dir, all);
  write_grid(dir, grid);
  csv::write_file(join(dir, "coefficients.csv"), format_lasso_coefficients(est.speed_models.lanes));
  write_json(join(dir, "models.json"), estimation_json(est));
}

nlohmann::ordered_json deterministic_view(const EvalReport& r) {
  auto j = report_to_json(r);
  j.erase("runtime_s");
  j.erase("timings_s");
  return j;
}

namespace {

SeedRun run_seed(const ExperimentConfig& cfg, const DataBundle& data, std::uint64_t seed,
                 const std::set<std::string>* avs, const std::string& dir) {
  const auto t0 = Clock::now();
  nlohmann::ordered_json timings;
  SeedRun run;
  run.seed = seed;

  auto t = Clock::now();
  ObservationSet obs = sense(cfg, data.tracks, seed, avs, {}, &run.n_avs);
  timings["sensing"] = seconds_since(t);
  t = Clock::now();
  Estimation est = estimate(cfg, obs, seed);
  timings["estimation"] = seconds_since(t);
  t = Clock::now();
  FieldSet estf{est.density, est.speed};
  run.report = stage("evaluate", [&] { return evaluate(truth_fields(data.truth), estf); });
  timings["evaluation"] = seconds_since(t);

  run.report.config = cfg.to_json();
  run.report.extra["seed"] = seed;
  run.report.extra["av_count"] = run.n_avs;
  run.report.extra["observation"] = observation_json(obs);
  run.report.extra["estimation"] = estimation_json(est);
  run.report.extra["timings_s"] = timings;
  run.report.runtime_s = seconds_since(t0);

  if (!dir.empty()) {
    stage("write", [&] {
      write_observation(join(dir, "observed"), obs);
      write_estimation(join(dir, "estimate"), est, obs.grid);
      write_json(join(dir, "report.json"), report_to_json(run.report));
      return 0;
    });
  }
  return run;
}

nlohmann::ordered_json triple(const MetricTriple& m) {
  return {{"nrmse", m.nrmse}, {"smape1", m.smape1}, {"smape2", m.smape2}};
}

EvalReport aggregate(const std::vector<SeedRun>& runs, const ExperimentConfig& cfg) {
  EvalReport out = runs.front().report;
  out.extra = nlohmann::ordered_json::object();
  const double n = static_cast<double>(runs.size());
  auto mean_of = [&](auto get) {
    double s = 0.0;
    for (const auto& r : runs) s += get(r.report);
    return s / n;
  };
  auto std_of = [&](auto get) {
    double m = mean_of(get), s = 0.0;
    for (const auto& r : runs) s += (get(r.report) - m) * (get(r.report) - m);
    return runs.size() > 1 ? std::sqrt(s / (n - 1.0)) : 0.0;
  };
  auto fill = [&](MetricTriple& dst, MetricTriple& sd, auto pick) {
    dst.nrmse = mean_of([&](const EvalReport& r) { return pick(r).nrmse; });
    dst.smape1 = mean_of([&](const EvalReport& r) { return pick(r).smape1; });
    dst.smape2 = mean_of([&](const EvalReport& r) { return pick(r).smape2; });
    sd.nrmse = std_of([&](const EvalReport& r) { return pick(r).nrmse; });
    sd.smape1 = std_of([&](const EvalReport& r) { return pick(r).smape1; });
    sd.smape2 = std_of([&](const EvalReport& r) { return pick(r).smape2; });
  };
  MetricTriple sd_d, sd_v, tmp;
  fill(out.density, sd_d, [](const EvalReport& r) -> const MetricTriple& { return r.density; });
  fill(out.speed, sd_v, [](const EvalReport& r) -> const MetricTriple& { return r.speed; });
  for (std::size_t i = 0; i < out.lanes.size(); ++i) {
    fill(out.lanes[i].density, tmp, [i](const EvalReport& r) -> const MetricTriple& { return r.lanes[i].density; });
    fill(out.lanes[i].speed, tmp, [i](const EvalReport& r) -> const MetricTriple& { return r.lanes[i].speed; });
  }
  out.config = cfg.to_json();
  auto per = nlohmann::ordered_json::array();
  double runtime = 0.0;
  for (const auto& r : runs) {
    per.push_back({{"seed", r.seed},
                   {"av_count", r.n_avs},
                   {"density", triple(r.report.density)},
                   {"speed", triple(r.report.speed)}});
    runtime += r.report.runtime_s;
  }
  out.extra["seeds"] = per.size();
  out.extra["std"] = {{"density", triple(sd_d)}, {"speed", triple(sd_v)}};
  out.extra["per_seed"] = per;
  out.runtime_s = runtime;
  return out;
}

}  // namespace

PipelineResult run_pipeline(const ExperimentConfig& cfg, const DataBundle* data, bool write) {
  stage("config", [&] {
    cfg.validate();
    return 0;
  });
  const auto t0 = Clock::now();
  DataBundle local;
  if (!data) {
    local = load_data(cfg);
    data = &local;
  }
  const double load_s = seconds_since(t0);
  if (write) stage("write", [&] {
      ensure_dir(cfg.output_dir);
      write_truth(join(cfg.output_dir, "truth"), *data);
      write_json(join(cfg.output_dir, "config.json"), cfg.to_json());
      return 0;
    });

  PipelineResult res;
  for (auto seed : cfg.seeds) {
    std::string dir = write ? join(cfg.output_dir, "seed_" + std::to_string(seed)) : std::string{};
    res.runs.push_back(run_seed(cfg, *data, seed, nullptr, dir));
  }
  res.aggregate = aggregate(res.runs, cfg);
  res.aggregate.runtime_s += load_s;
  res.aggregate.extra["timings_s"] = {{"load_and_ground_truth", load_s}};
  if (write) stage("write", [&] {
      write_json(join(cfg.output_dir, "report.json"), report_to_json(res.aggregate));
      csv::write_file(join(cfg.output_dir, "summary.txt"), report_summary(res.aggregate));
      return 0;
    });
  return res;
}

std::string sweep_key(const std::string& p) {
  static const std::map<std::string, std::string> keys{
      {"penetration", "experiment.penetration"},     {"lidar_range", "sensor.lidar_range"},
      {"sampling_rate", "sensor.sampling_rate"},     {"missing_rate", "sensor.missing_rate"},
      {"speed_noise", "sensor.speed_noise"},         {"perception", "experiment.perception"},
      {"density_method", "experiment.density_method"}, {"speed_method", "experiment.speed_method"},
      {"dedup_tolerance", "experiment.dedup_tolerance"}};
  auto it = keys.find(p);
  if (it == keys.end()) throw ConfigError("parameter cannot be swept: " + p);
  return it->second;
}

SweepResult run_sweep(const ExperimentConfig& base, const SweepSpec& spec, const DataBundle* data) {
  const std::string key = stage("config", [&] {
    base.validate();
    if (spec.values.empty()) throw ConfigError("sweep needs at least one value");
    return sweep_key(spec.parameter);
  });
  DataBundle local;
  if (!data) {
    local = load_data(base);
    data = &local;
  }

  struct Point {
    std::string value;
    std::uint64_t seed;
    bool ok = false;
    EvalReport report;
    std::size_t n_avs = 0;
    std::string error;
  };
  std::vector<Point> points;
  for (const auto& v : spec.values)
    for (auto s : base.seeds) points.push_back(Point{v, s, false, {}, 0, {}});

  std::size_t next = 0;
  std::mutex mu;
  auto worker = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard<std::mutex> lk(mu);
        if (next >= points.size()) return;
        i = next++;
      }
      Point& p = points[i];
      try {
        ExperimentConfig cfg = base;
        cfg.set(key, p.value);
        cfg.seeds = {p.seed};
        cfg.validate();
        auto run = run_seed(cfg, *data, p.seed, nullptr, {});
        p.report = std::move(run.report);
        p.n_avs = run.n_avs;
        p.ok = true;
      } catch (const std::exception& e) {
        p.error = e.what();
      }
    }
  };
  const unsigned n_workers = std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(),
                                                             static_cast<unsigned>(points.size())));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  SweepResult out;
  std::ostringstream t, f;
  t << "parameter,value,seed,av_count,density_nrmse,density_smape1,density_smape2,speed_nrmse,speed_smape1,speed_smape2\n";
  f << "parameter,value,seed,error\n";
  for (const auto& p : points) {
    if (p.ok) {
      const auto& r = p.report;
      t << spec.parameter << ',' << p.value << ',' << p.seed << ',' << p.n_avs << ',' << csv::format_double(r.density.nrmse)
        << ',' << csv::format_double(r.density.smape1) << ',' << csv::format_double(r.density.smape2) << ','
        << csv::format_double(r.speed.nrmse) << ',' << csv::format_double(r.speed.smape1) << ','
        << csv::format_double(r.speed.smape2) << '\n';
      ++out.rows;
    } else {
      std::string msg = p.error;
      std::replace(msg.begin(), msg.end(), ',', ';');
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      f << spec.parameter << ',' << p.value << ',' << p.seed << ',' << msg << '\n';
      ++out.failed;
    }
  }
  out.table = t.str();
  out.failures = f.str();
  return out;
}

PlatoonResult run_platoon(const ExperimentConfig& cfg, const std::vector<int>& dedicated_lanes, const DataBundle* data,
                          bool write) {
  stage("config", [&] {
    cfg.validate();
    if (dedicated_lanes.empty()) throw ConfigError("dedicated lane list is empty");
    return 0;
  });
  DataBundle local;
  if (!data) {
    local = load_data(cfg);
    data = &local;
  }
  for (int l : dedicated_lanes)
    if (data->tracks.grid.lane_index(l) < 0)
      throw StageError("config", ConfigError("lane " + std::to_string(l) + " is not present in the data"));

  std::set<std::string> dedicated;
  std::vector<std::string> all;
  for (const auto& tr : data->tracks.tracks) {
    if (tr.points.empty()) continue;
    all.push_back(tr.vehicle_id);
    if (std::find(dedicated_lanes.begin(), dedicated_lanes.end(), tr.points.front().lane) != dedicated_lanes.end())
      dedicated.insert(tr.vehicle_id);
  }
  std::sort(all.begin(), all.end());
  const std::uint64_t seed = cfg.seeds.front();
  Rng rng(mix_seed(substream(seed, Stream::AvSelection), {0x91a7}));
  rng.shuffle(all.begin(), all.end());
  std::set<std::string> uniform(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(dedicated.size()));

  const std::string base = join(cfg.output_dir, "platoon");
  if (write) stage("write", [&] {
      ensure_dir(base);
      write_truth(join(base, "truth"), *data);
      return 0;
    });
  PlatoonResult out;
  out.av_count = dedicated.size();
  out.dedicated = run_seed(cfg, *data, seed, &dedicated, write ? join(base, "dedicated") : std::string{}).report;
  out.uniform = run_seed(cfg, *data, seed, &uniform, write ? join(base, "uniform") : std::string{}).report;
  out.dedicated.extra["scenario"] = "dedicated";
  out.dedicated.extra["dedicated_lanes"] = dedicated_lanes;
  out.uniform.extra["scenario"] = "uniform";
  if (write) stage("write", [&] {
      nlohmann::ordered_json j;
      j["av_count"] = out.av_count;
      j["dedicated_lanes"] = dedicated_lanes;
      j["dedicated"] = report_to_json(out.dedicated);
      j["uniform"] = report_to_json(out.uniform);
      write_json(join(base, "platoon.json"), j);
      return 0;
    });
  return out;
}

}  // namespace avtse
