#include "config.hpp"

#define TOML_EXCEPTIONS 1
#include <tomlplusplus/toml.hpp>

#include <cmath>
#include <sstream>

#include "csv.hpp"
#include "errors.hpp"

namespace avtse {

SynthConfig congested_scenario() {
  SynthConfig c;
  c.lanes = 3;
  c.vehicles_per_lane = 450;
  c.free_speed = 15.0;
  c.spacing = 30.0;
  c.headway_dist = HeadwayDistribution::ShiftedExponential;
  c.road_length = 600.0;
  c.duration = 900.0;
  c.n_h = 90;
  c.n_s = 60;
  c.dt = 0.1;
  c.slowdown = Slowdown{200.0, 300.0, 5.0, 400.0, 450.0};
  return c;
}

ExperimentConfig::ExperimentConfig() : synthetic(congested_scenario()) {}

namespace {

double to_double(const std::string& key, const std::string& v) {
  double d = 0.0;
  if (!csv::parse_double(csv::trim(v), d) || std::isnan(d)) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return d;
}

int to_int(const std::string& key, const std::string& v) {
  long long i = 0;
  if (!csv::parse_int(csv::trim(v), i)) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return static_cast<int>(i);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  long long i = 0;
  if (!csv::parse_int(csv::trim(v), i) || i < 0) throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return static_cast<std::uint64_t>(i);
}

bool to_bool(const std::string& key, const std::string& v) {
  auto t = csv::trim(v);
  if (t == "true" || t == "1") return true;
  if (t == "false" || t == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::string> to_list(const std::string& v) {
  std::string s(csv::trim(v));
  if (!s.empty() && s.front() == '[') s.erase(0, 1);
  if (!s.empty() && s.back() == ']') s.pop_back();
  std::vector<std::string> out;
  for (auto part : csv::split(s))
    if (!part.empty()) out.emplace_back(part);
  return out;
}

Slowdown& slowdown(ExperimentConfig& c) {
  if (!c.synthetic.slowdown) c.synthetic.slowdown = Slowdown{};
  return *c.synthetic.slowdown;
}

}  // namespace

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  const std::string v(csv::trim(value));
  if (key == "data.source") {
    if (v != "synthetic" && v != "csv") throw ConfigError("data.source must be synthetic or csv");
    data.source = v;
  } else if (key == "data.path") {
    data.path = v;
  } else if (key == "data.schema") {
    if (v != "standard" && v != "ngsim") throw ConfigError("data.schema must be standard or ngsim");
    data.schema = v;
  } else if (key == "data.unit_mode") {
    if (v == "metric") data.unit_mode = UnitMode::Metric;
    else if (v == "feet") data.unit_mode = UnitMode::Feet;
    else throw ConfigError("data.unit_mode must be metric or feet");
  } else if (key == "data.dt") {
    data.dt = to_double(key, v);
  } else if (key == "data.time_offset") {
    if (v == "auto") data.time_offset.reset();
    else data.time_offset = to_double(key, v);
  } else if (key == "data.t_len") {
    data.t_len = to_double(key, v);
  } else if (key == "data.x_len") {
    data.x_len = to_double(key, v);
  } else if (key == "data.lanes") {
    data.lanes.clear();
    for (auto& s : to_list(v)) data.lanes.push_back(to_int(key, s));
  } else if (key == "synthetic.lanes") {
    synthetic.lanes = to_int(key, v);
  } else if (key == "synthetic.vehicles_per_lane") {
    synthetic.vehicles_per_lane = to_int(key, v);
  } else if (key == "synthetic.free_speed") {
    synthetic.free_speed = to_double(key, v);
  } else if (key == "synthetic.spacing") {
    synthetic.spacing = to_double(key, v);
  } else if (key == "synthetic.headway_dist") {
    if (v == "constant") synthetic.headway_dist = HeadwayDistribution::Constant;
    else if (v == "shifted_exponential") synthetic.headway_dist = HeadwayDistribution::ShiftedExponential;
    else throw ConfigError("synthetic.headway_dist must be constant or shifted_exponential");
  } else if (key == "synthetic.road_length") {
    synthetic.road_length = to_double(key, v);
  } else if (key == "synthetic.duration") {
    synthetic.duration = to_double(key, v);
  } else if (key == "synthetic.dt") {
    synthetic.dt = to_double(key, v);
  } else if (key == "synthetic.wave_time") {
    synthetic.wave_time = to_double(key, v);
  } else if (key == "synthetic.jam_spacing") {
    synthetic.jam_spacing = to_double(key, v);
  } else if (key == "synthetic.seed") {
    synthetic_seed = to_u64(key, v);
  } else if (key == "synthetic.slowdown.enabled") {
    if (to_bool(key, v)) slowdown(*this);
    else synthetic.slowdown.reset();
  } else if (key == "synthetic.slowdown.start") {
    slowdown(*this).start = to_double(key, v);
  } else if (key == "synthetic.slowdown.duration") {
    slowdown(*this).duration = to_double(key, v);
  } else if (key == "synthetic.slowdown.speed") {
    slowdown(*this).speed = to_double(key, v);
  } else if (key == "synthetic.slowdown.x_from") {
    slowdown(*this).x_from = to_double(key, v);
  } else if (key == "synthetic.slowdown.x_to") {
    slowdown(*this).x_to = to_double(key, v);
  } else if (key == "grid.n_h") {
    n_h = to_int(key, v);
  } else if (key == "grid.n_s") {
    n_s = to_int(key, v);
  } else if (key == "grid.lane_width") {
    lane_width = to_double(key, v);
  } else if (key == "sensor.lrr_range") {
    sensor.lrr_range = to_double(key, v);
  } else if (key == "sensor.lidar_range") {
    sensor.lidar_range = to_double(key, v);
  } else if (key == "sensor.missing_rate") {
    sensor.missing_rate = to_double(key, v);
  } else if (key == "sensor.speed_noise") {
    sensor.speed_noise = to_double(key, v);
  } else if (key == "sensor.sampling_rate") {
    sensor.sampling_rate = to_double(key, v);
  } else if (key == "sensor.rear_lrr") {
    sensor.rear_lrr = to_bool(key, v);
  } else if (key == "experiment.penetration") {
    penetration = to_double(key, v);
  } else if (key == "experiment.perception") {
    sensor.perception = parse_perception(v);
  } else if (key == "experiment.density_method") {
    density_method = parse_impute_method(v);
  } else if (key == "experiment.speed_method") {
    speed_method = parse_speed_method(v);
  } else if (key == "experiment.dedup_tolerance") {
    dedup_tolerance = to_double(key, v);
  } else if (key == "experiment.epsilon") {
    epsilon = to_double(key, v);
  } else if (key == "experiment.seeds") {
    seeds.clear();
    for (auto& s : to_list(v)) seeds.push_back(to_u64(key, s));
  } else if (key == "experiment.output_dir") {
    output_dir = v;
  } else {
    throw ConfigError("unknown config key: " + key);
  }
}

void ExperimentConfig::validate() const {
  if (data.source == "csv" && data.path.empty()) throw ConfigError("data.path is required when data.source = csv");
  if (!(data.dt > 0.0)) throw ConfigError("data.dt must be positive");
  if (n_h < 1 || n_s < 1) throw ConfigError("grid.n_h and grid.n_s must be positive");
  if (!(lane_width > 0.0)) throw ConfigError("grid.lane_width must be positive");
  if (!(penetration >= 0.0 && penetration <= 1.0)) throw ConfigError("experiment.penetration must lie in [0, 1]");
  if (!(dedup_tolerance >= 0.0)) throw ConfigError("experiment.dedup_tolerance must be non-negative");
  if (!(epsilon >= 0.0 && epsilon < 1.0)) throw ConfigError("experiment.epsilon must lie in [0, 1)");
  if (seeds.empty()) throw ConfigError("experiment.seeds must list at least one seed");
  sensor.validate(data.source == "synthetic" ? synthetic.dt : data.dt);
}

nlohmann::ordered_json ExperimentConfig::to_json() const {
  using J = nlohmann::ordered_json;
  J j;
  j["data"] = {{"source", data.source},
               {"path", data.path},
               {"schema", data.schema},
               {"unit_mode", data.unit_mode == UnitMode::Feet ? "feet" : "metric"},
               {"dt", data.dt},
               {"time_offset", data.time_offset ? J(*data.time_offset) : J("auto")},
               {"t_len", data.t_len ? J(*data.t_len) : J(nullptr)},
               {"x_len", data.x_len ? J(*data.x_len) : J(nullptr)},
               {"lanes", data.lanes}};
  J syn = {{"lanes", synthetic.lanes},
           {"vehicles_per_lane", synthetic.vehicles_per_lane},
           {"free_speed", synthetic.free_speed},
           {"spacing", synthetic.spacing},
           {"headway_dist", synthetic.headway_dist == HeadwayDistribution::Constant ? "constant" : "shifted_exponential"},
           {"road_length", synthetic.road_length},
           {"duration", synthetic.duration},
           {"dt", synthetic.dt},
           {"wave_time", synthetic.wave_time},
           {"jam_spacing", synthetic.jam_spacing},
           {"seed", synthetic_seed}};
  if (synthetic.slowdown) {
    const auto& s = *synthetic.slowdown;
    syn["slowdown"] = {{"enabled", true}, {"start", s.start}, {"duration", s.duration}, {"speed", s.speed},
                       {"x_from", s.x_from}, {"x_to", s.x_to}};
  } else {
    syn["slowdown"] = {{"enabled", false}};
  }
  j["synthetic"] = syn;
  j["grid"] = {{"n_h", n_h}, {"n_s", n_s}, {"lane_width", lane_width}};
  j["sensor"] = {{"lrr_range", sensor.lrr_range},         {"lidar_range", sensor.lidar_range},
                 {"missing_rate", sensor.missing_rate},   {"speed_noise", sensor.speed_noise},
                 {"sampling_rate", sensor.sampling_rate}, {"rear_lrr", sensor.rear_lrr}};
  j["experiment"] = {{"penetration", penetration},
                     {"perception", perception_name(sensor.perception)},
                     {"density_method", impute_method_name(density_method)},
                     {"speed_method", speed_method_name(speed_method)},
                     {"dedup_tolerance", dedup_tolerance},
                     {"epsilon", epsilon},
                     {"seeds", seeds},
                     {"output_dir", output_dir}};
  return j;
}

namespace {

std::string node_to_string(const toml::node& n) {
  if (auto s = n.as_string()) return s->get();
  if (auto i = n.as_integer()) return std::to_string(i->get());
  if (auto f = n.as_floating_point()) return csv::format_double(f->get());
  if (auto b = n.as_boolean()) return b->get() ? "true" : "false";
  if (auto a = n.as_array()) {
    std::string out;
    for (std::size_t i = 0; i < a->size(); ++i) {
      if (i) out += ',';
      out += node_to_string(*a->get(i));
    }
    return out;
  }
  throw ConfigError("unsupported TOML value type");
}

void flatten(const toml::table& t, const std::string& prefix, ExperimentConfig& cfg) {
  for (auto&& [k, node] : t) {
    std::string key = prefix.empty() ? std::string(k.str()) : prefix + "." + std::string(k.str());
    if (auto sub = node.as_table()) flatten(*sub, key, cfg);
    else cfg.set(key, node_to_string(node));
  }
}

void flatten_json(const nlohmann::ordered_json& j, const std::string& prefix, ExperimentConfig& cfg) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    const auto& v = it.value();
    if (v.is_object()) {
      flatten_json(v, key, cfg);
    } else if (v.is_null()) {
      continue;
    } else if (v.is_array()) {
      std::string out;
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += v[i].is_string() ? v[i].get<std::string>() : v[i].dump();
      }
      cfg.set(key, out);
    } else if (v.is_string()) {
      cfg.set(key, v.get<std::string>());
    } else if (v.is_number_float()) {
      cfg.set(key, csv::format_double(v.get<double>()));
    } else {
      cfg.set(key, v.dump());
    }
  }
}

}  // namespace

ExperimentConfig config_from_json(const nlohmann::ordered_json& j) {
  ExperimentConfig cfg;
  if (!j.is_object()) throw ConfigError("config echo must be a JSON object");
  flatten_json(j, "", cfg);
  return cfg;
}

ExperimentConfig parse_config_toml(const std::string& text) {
  ExperimentConfig cfg;
  try {
    auto tbl = toml::parse(text);
    flatten(tbl, "", cfg);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "TOML parse error: " << e.description() << " at line " << e.source().begin.line;
    throw ConfigError(os.str());
  }
  return cfg;
}

ExperimentConfig load_config_toml(const std::string& path) { return parse_config_toml(csv::read_file(path)); }

void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override must look like key=value: " + assignment);
  cfg.set(std::string(csv::trim(assignment.substr(0, eq))), assignment.substr(eq + 1));
}

}  // namespace avtse
