#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "edie.hpp"

namespace avtse {

struct MaskedMatrix {
  Eigen::MatrixXd values;
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> mask;  // true = observed

  MaskedMatrix() = default;
  MaskedMatrix(Eigen::MatrixXd v, Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> m)
      : values(std::move(v)), mask(std::move(m)) {}
  static MaskedMatrix from_field(const CellField& f) { return {f.values, f.mask}; }

  int rows() const { return static_cast<int>(values.rows()); }
  int cols() const { return static_cast<int>(values.cols()); }
  std::size_t observed() const { return static_cast<std::size_t>(mask.count()); }
};

enum class ImputeMethod { NI, KNN, SI };
const char* impute_method_name(ImputeMethod m);
ImputeMethod parse_impute_method(const std::string& s);

struct ImputeResult {
  Eigen::MatrixXd values;
  bool converged = true;
  int iterations = 0;
  std::string note;
};

Eigen::MatrixXd impute_naive(const MaskedMatrix& m);

// Rows are instances, columns features. Distance between rows is the RMS
// difference over co-observed columns.
ImputeResult impute_knn(const MaskedMatrix& m, int k);

// `warm` optionally seeds the iterate (same shape as m).
ImputeResult impute_soft(const MaskedMatrix& m, int max_rank, double lambda, bool clip_nonnegative = true,
                         const Eigen::MatrixXd* warm = nullptr);

struct CvGrid {
  std::vector<int> ks{1, 3, 5, 10, 20};
  std::vector<int> ranks{2, 4, 8, 16};
  std::vector<double> lambda_fracs{0.01, 0.05, 0.1};
};

struct CvCandidate {
  int k = 0;
  int max_rank = 0;
  double lambda_frac = 0.0;
  double score = 0.0;  // SMAPE1 on hidden entries
};

struct ImputeModel {
  ImputeMethod method = ImputeMethod::SI;
  int k = 0;
  int max_rank = 0;
  double lambda_frac = 0.0;
  double lambda = 0.0;  // absolute, for the refit on all observations
  std::vector<CvCandidate> cv_report;
  std::vector<std::string> warnings;
};

// Largest singular value of the column-mean filled matrix.
double naive_sigma1(const MaskedMatrix& m);

ImputeModel cv_select(const MaskedMatrix& m, ImputeMethod method, const CvGrid& grid, std::uint64_t seed);

// Applies a selected model to all observations of `m`.
ImputeResult impute_with(const MaskedMatrix& m, const ImputeModel& model);

}  // namespace avtse
