#include "metrics.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "errors.hpp"

namespace avtse {

namespace {

void same_length(std::span<const double> z, std::span<const double> zh) {
  if (z.size() != zh.size()) throw MetricError("metric inputs differ in length");
  if (z.empty()) throw MetricError("metric inputs are empty");
}

}  // namespace

double nrmse(std::span<const double> z, std::span<const double> zh) {
  same_length(z, zh);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    num += (z[i] - zh[i]) * (z[i] - zh[i]);
    den += z[i] * z[i];
  }
  if (den == 0.0) throw MetricError("nrmse undefined: reference vector is all zero");
  return std::sqrt(num / den);
}

SmapeResult smape1_detail(std::span<const double> z, std::span<const double> zh) {
  same_length(z, zh);
  SmapeResult r;
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    double s = z[i] + zh[i];
    if (s == 0.0) {
      ++r.skipped;
      continue;
    }
    sum += std::abs(z[i] - zh[i]) / s;
    ++r.used;
  }
  if (r.used == 0) throw MetricError("smape1 undefined: every pair sums to zero");
  r.value = sum / static_cast<double>(r.used);
  return r;
}

SmapeResult smape2_detail(std::span<const double> z, std::span<const double> zh) {
  same_length(z, zh);
  SmapeResult r;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    double s = z[i] + zh[i];
    if (s == 0.0) {
      ++r.skipped;
      continue;
    }
    num += std::abs(z[i] - zh[i]);
    den += s;
    ++r.used;
  }
  if (r.used == 0) throw MetricError("smape2 undefined: every pair sums to zero");
  r.value = num / den;
  return r;
}

double smape1(std::span<const double> z, std::span<const double> zh) { return smape1_detail(z, zh).value; }
double smape2(std::span<const double> z, std::span<const double> zh) { return smape2_detail(z, zh).value; }

CellField flow_from_kv(const CellField& k, const CellField& v) {
  if (k.rows() != v.rows() || k.cols() != v.cols()) throw MetricError("density and speed fields differ in shape");
  CellField q(k.lane, Quantity::Flow, k.rows(), k.cols());
  for (int s = 0; s < k.rows(); ++s)
    for (int h = 0; h < k.cols(); ++h)
      if (k.defined(s, h) && v.defined(s, h)) q.set(s, h, k.values(s, h) * v.values(s, h));
  return q;
}

namespace {

MetricTriple score(const CellField& truth, const CellField& est) {
  if (truth.rows() != est.rows() || truth.cols() != est.cols())
    throw MetricError("truth and estimate grids differ for lane " + std::to_string(truth.lane));
  std::vector<double> z, zh;
  for (int h = 0; h < truth.cols(); ++h)
    for (int s = 0; s < truth.rows(); ++s) {
      if (!truth.defined(s, h)) continue;
      if (!est.defined(s, h))
        throw MetricError("estimate missing at a defined truth cell (lane " + std::to_string(truth.lane) + ")");
      z.push_back(truth.values(s, h));
      zh.push_back(est.values(s, h));
    }
  if (z.empty()) throw MetricError("no defined cells to evaluate on lane " + std::to_string(truth.lane));
  return {100.0 * nrmse(z, zh), 100.0 * smape1(z, zh), 100.0 * smape2(z, zh)};
}

nlohmann::ordered_json triple_json(const MetricTriple& m) {
  return {{"nrmse", m.nrmse}, {"smape1", m.smape1}, {"smape2", m.smape2}};
}

MetricTriple triple_from(const nlohmann::ordered_json& j) {
  return {j.at("nrmse").get<double>(), j.at("smape1").get<double>(), j.at("smape2").get<double>()};
}

}  // namespace

EvalReport evaluate(const FieldSet& truth, const FieldSet& estimate) {
  if (truth.density.size() != truth.speed.size() || estimate.density.size() != estimate.speed.size())
    throw MetricError("density and speed lane counts differ");
  if (truth.density.empty()) throw MetricError("no lanes to evaluate");
  std::map<int, std::size_t> est_lane;
  for (std::size_t i = 0; i < estimate.density.size(); ++i) est_lane[estimate.density[i].lane] = i;

  EvalReport r;
  for (std::size_t i = 0; i < truth.density.size(); ++i) {
    const int lane = truth.density[i].lane;
    auto it = est_lane.find(lane);
    if (it == est_lane.end()) throw MetricError("estimate lacks lane " + std::to_string(lane));
    LaneEval le;
    le.lane = lane;
    le.density = score(truth.density[i], estimate.density[it->second]);
    le.speed = score(truth.speed[i], estimate.speed[it->second]);
    le.evaluated = truth.density[i].defined_count();
    le.excluded = static_cast<std::size_t>(truth.density[i].rows() * truth.density[i].cols()) - le.evaluated;
    r.lanes.push_back(le);
  }
  std::sort(r.lanes.begin(), r.lanes.end(), [](const LaneEval& a, const LaneEval& b) { return a.lane < b.lane; });
  const double n = static_cast<double>(r.lanes.size());
  for (const auto& le : r.lanes) {
    r.density.nrmse += le.density.nrmse / n;
    r.density.smape1 += le.density.smape1 / n;
    r.density.smape2 += le.density.smape2 / n;
    r.speed.nrmse += le.speed.nrmse / n;
    r.speed.smape1 += le.speed.smape1 / n;
    r.speed.smape2 += le.speed.smape2 / n;
  }
  return r;
}

nlohmann::ordered_json report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["aggregate"] = {{"density", triple_json(r.density)}, {"speed", triple_json(r.speed)}};
  auto lanes = nlohmann::ordered_json::array();
  for (const auto& le : r.lanes)
    lanes.push_back({{"lane", le.lane},
                     {"density", triple_json(le.density)},
                     {"speed", triple_json(le.speed)},
                     {"cells_evaluated", le.evaluated},
                     {"cells_excluded", le.excluded}});
  j["lanes"] = lanes;
  j["config"] = r.config;
  for (auto it = r.extra.begin(); it != r.extra.end(); ++it) j[it.key()] = it.value();
  j["runtime_s"] = r.runtime_s;
  return j;
}

EvalReport report_from_json(const nlohmann::ordered_json& j) {
  EvalReport r;
  try {
    r.density = triple_from(j.at("aggregate").at("density"));
    r.speed = triple_from(j.at("aggregate").at("speed"));
    for (const auto& l : j.at("lanes")) {
      LaneEval le;
      le.lane = l.at("lane").get<int>();
      le.density = triple_from(l.at("density"));
      le.speed = triple_from(l.at("speed"));
      le.evaluated = l.value("cells_evaluated", std::size_t{0});
      le.excluded = l.value("cells_excluded", std::size_t{0});
      r.lanes.push_back(le);
    }
    if (j.contains("config")) r.config = j.at("config");
    r.runtime_s = j.value("runtime_s", 0.0);
    for (auto it = j.begin(); it != j.end(); ++it)
      if (it.key() != "aggregate" && it.key() != "lanes" && it.key() != "config" && it.key() != "runtime_s")
        r.extra[it.key()] = it.value();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed report: ") + e.what());
  }
  return r;
}

std::string report_summary(const EvalReport& r) {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-10s %-8s %9s %9s %9s %7s %7s\n", "lane", "quantity", "NRMSE%", "SMAPE1%", "SMAPE2%",
                "cells", "masked");
  os << buf;
  auto row = [&](const std::string& lane, const char* q, const MetricTriple& m, std::string cells, std::string masked) {
    std::snprintf(buf, sizeof buf, "%-10s %-8s %9.2f %9.2f %9.2f %7s %7s\n", lane.c_str(), q, m.nrmse, m.smape1,
                  m.smape2, cells.c_str(), masked.c_str());
    os << buf;
  };
  for (const auto& le : r.lanes) {
    row(std::to_string(le.lane), "density", le.density, std::to_string(le.evaluated), std::to_string(le.excluded));
    row(std::to_string(le.lane), "speed", le.speed, "", "");
  }
  row("mean", "density", r.density, "", "");
  row("mean", "speed", r.speed, "", "");
  return os.str();
}

}  // namespace avtse
