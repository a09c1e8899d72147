#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "edie.hpp"
#include "imputation.hpp"

namespace avtse {

struct StencilOffset {
  int dlane, dh, ds;
};

enum class StencilVariant { Narrow, Wide };

struct StencilSpec {
  StencilVariant variant = StencilVariant::Wide;
  std::vector<StencilOffset> offsets;

  // (0,0), previous interval, upstream, downstream on the target lane
  static StencilSpec narrow();
  // the same four cells on lanes l, l-1, l+1 (x1..x4, x5..x8, x9..x12)
  static StencilSpec wide();
  std::size_t size() const { return offsets.size(); }
};

// `k_hat` holds one completed n_S x n_H matrix per lane, ordered by lane index.
// Out-of-domain slots take the mean of the in-domain stencil values.
std::vector<double> stencil_features(std::span<const Eigen::MatrixXd> k_hat, int lane_idx, int h, int s,
                                     const StencilSpec& spec);

struct LassoModel {
  Eigen::VectorXd weights;      // original feature units
  Eigen::VectorXd std_weights;  // standardized feature units
  double intercept = 0.0;
  double lambda = 0.0;
  Eigen::VectorXd mean, scale;
  bool converged = true;
  int sweeps = 0;
  std::vector<double> objective_trace;  // objective after each sweep

  double predict(std::span<const double> x) const;
};

// Largest useful penalty: max |Xs^T (y - mean y)| / n on standardized X.
double lasso_lambda_max(const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

// Minimizes (1/2n)||y - Xw - b||^2 + lambda ||w||_1 by cyclic coordinate
// descent on standardized features. `warm` holds standardized weights.
LassoModel lasso_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda,
                     const Eigen::VectorXd* warm = nullptr);

struct ForestParams {
  int n_trees = 50;
  int max_depth = 6;
  int min_leaf = 5;
};

struct TreeNode {
  int feature = -1;  // -1 = leaf
  double threshold = 0.0;
  int left = -1, right = -1;
  double value = 0.0;
};

struct ForestModel {
  ForestParams params;
  std::uint64_t seed = 0;
  std::vector<std::vector<TreeNode>> trees;

  double predict(std::span<const double> x) const;
};

ForestModel forest_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const ForestParams& params,
                       std::uint64_t seed);

enum class SpeedMethod { LR1, LR2, RF1, RF2, NI, KNN, SI };
const char* speed_method_name(SpeedMethod m);
SpeedMethod parse_speed_method(const std::string& s);

struct SpeedLaneReport {
  int lane = 0;
  std::string method;
  bool fallback = false;
  std::size_t observed = 0;
  double lambda = 0.0;
  LassoModel lasso;  // LR methods only
  ForestParams forest;
  ImputeModel imputer;  // imputation methods and fallbacks
  std::vector<std::pair<std::string, double>> cv;  // candidate label, mean fold SMAPE1
  std::vector<std::string> warnings;
};

struct SpeedEstimate {
  std::vector<CellField> v_hat;
  std::vector<SpeedLaneReport> lanes;
};

struct SpeedOptions {
  SpeedMethod method = SpeedMethod::LR2;
  int folds = 5;
  std::uint64_t seed = 0;
  CvGrid imputer_grid;
  std::vector<ForestParams> forest_grid{{50, 6, 5}, {200, 6, 5}, {50, 12, 5}, {200, 12, 5}};
};

// Observed cells are copied through; the rest come from a per-lane model.
SpeedEstimate estimate_speed(std::span<const CellField> v_obs, std::span<const CellField> k_hat,
                             const SpeedOptions& opts);

// lane,feature,weight,standardized_weight; intercept as feature "intercept".
std::string format_lasso_coefficients(std::span<const SpeedLaneReport> lanes);

}  // namespace avtse
