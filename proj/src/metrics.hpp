#pragma once

#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "edie.hpp"

namespace avtse {

double nrmse(std::span<const double> z, std::span<const double> zh);

struct SmapeResult {
  double value = 0.0;
  std::size_t used = 0;
  std::size_t skipped = 0;  // pairs with z + zh == 0
};

SmapeResult smape1_detail(std::span<const double> z, std::span<const double> zh);
SmapeResult smape2_detail(std::span<const double> z, std::span<const double> zh);
double smape1(std::span<const double> z, std::span<const double> zh);
double smape2(std::span<const double> z, std::span<const double> zh);

// q = k * v where both are defined.
CellField flow_from_kv(const CellField& k, const CellField& v);

struct MetricTriple {
  double nrmse = 0.0, smape1 = 0.0, smape2 = 0.0;  // percent
};

struct LaneEval {
  int lane = 0;
  MetricTriple density, speed;
  std::size_t evaluated = 0;  // cells defined in truth
  std::size_t excluded = 0;   // cells masked in truth
};

struct EvalReport {
  std::vector<LaneEval> lanes;
  MetricTriple density, speed;  // unweighted mean across lanes
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();
  double runtime_s = 0.0;
};

struct FieldSet {
  std::vector<CellField> density, speed;  // one per lane, same lane order
};

// Truth-masked cells are excluded; estimate cells must be defined where truth is.
EvalReport evaluate(const FieldSet& truth, const FieldSet& estimate);

nlohmann::ordered_json report_to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::ordered_json& j);
std::string report_summary(const EvalReport& r);

}  // namespace avtse
