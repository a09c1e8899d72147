#include "imputation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "errors.hpp"
#include "rng.hpp"
#include "svd.hpp"

namespace avtse {

const char* impute_method_name(ImputeMethod m) {
  switch (m) {
    case ImputeMethod::NI: return "NI";
    case ImputeMethod::KNN: return "KNN";
    case ImputeMethod::SI: return "SI";
  }
  return "?";
}

ImputeMethod parse_impute_method(const std::string& s) {
  if (s == "NI") return ImputeMethod::NI;
  if (s == "KNN") return ImputeMethod::KNN;
  if (s == "SI") return ImputeMethod::SI;
  throw ConfigError("unknown imputation method: " + s);
}

namespace {

void check_shape(const MaskedMatrix& m) {
  if (m.values.rows() != m.mask.rows() || m.values.cols() != m.mask.cols())
    throw EstimationError("mask shape does not match values");
  if (m.observed() == 0) throw EstimationError("matrix has no observed entries");
}

double hidden_smape1(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& est,
                     const std::vector<std::pair<int, int>>& cells) {
  double sum = 0.0;
  int n = 0;
  for (auto [i, j] : cells) {
    double z = truth(i, j), zh = est(i, j);
    if (z + zh == 0.0) continue;
    sum += std::abs(z - zh) / (z + zh);
    ++n;
  }
  return n > 0 ? sum / n : 0.0;
}

// Candidates are visited simplest first; a later one must beat the incumbent
// by a relative margin, otherwise the simpler model stays.
bool improves(double score, double best) { return score < best * (1.0 - 1e-3); }

}  // namespace

Eigen::MatrixXd impute_naive(const MaskedMatrix& m) {
  check_shape(m);
  double gsum = 0.0;
  std::size_t gn = 0;
  for (int j = 0; j < m.cols(); ++j)
    for (int i = 0; i < m.rows(); ++i)
      if (m.mask(i, j)) {
        gsum += m.values(i, j);
        ++gn;
      }
  const double gmean = gsum / static_cast<double>(gn);
  Eigen::MatrixXd out = m.values;
  for (int j = 0; j < m.cols(); ++j) {
    double s = 0.0;
    int n = 0;
    for (int i = 0; i < m.rows(); ++i)
      if (m.mask(i, j)) {
        s += m.values(i, j);
        ++n;
      }
    const double fill = n > 0 ? s / n : gmean;
    for (int i = 0; i < m.rows(); ++i)
      if (!m.mask(i, j)) out(i, j) = fill;
  }
  return out;
}

ImputeResult impute_knn(const MaskedMatrix& m, int k) {
  check_shape(m);
  if (k < 1) throw ConfigError("knn requires k >= 1");
  const int R = m.rows(), C = m.cols();
  ImputeResult res;
  res.values = m.values;
  const Eigen::MatrixXd naive = impute_naive(m);

  Eigen::MatrixXd dist = Eigen::MatrixXd::Constant(R, R, std::numeric_limits<double>::infinity());
  for (int a = 0; a < R; ++a)
    for (int b = a + 1; b < R; ++b) {
      double s = 0.0;
      int n = 0;
      for (int j = 0; j < C; ++j)
        if (m.mask(a, j) && m.mask(b, j)) {
          double d = m.values(a, j) - m.values(b, j);
          s += d * d;
          ++n;
        }
      if (n > 0) dist(a, b) = dist(b, a) = std::sqrt(s / n);
    }

  bool short_k = false;
  std::vector<int> cand;
  for (int i = 0; i < R; ++i)
    for (int j = 0; j < C; ++j) {
      if (m.mask(i, j)) continue;
      cand.clear();
      for (int b = 0; b < R; ++b)
        if (b != i && m.mask(b, j) && std::isfinite(dist(i, b))) cand.push_back(b);
      if (cand.empty()) {
        res.values(i, j) = naive(i, j);
        continue;
      }
      const auto kk = std::min<std::size_t>(static_cast<std::size_t>(k), cand.size());
      if (kk < static_cast<std::size_t>(k)) short_k = true;
      std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(kk), cand.end(), [&](int x, int y) {
        return dist(i, x) != dist(i, y) ? dist(i, x) < dist(i, y) : x < y;
      });
      double s = 0.0;
      for (std::size_t c = 0; c < kk; ++c) s += m.values(cand[c], j);
      res.values(i, j) = s / static_cast<double>(kk);
    }
  if (short_k) res.note = "k exceeds candidate rows for some cells; all candidates used";
  return res;
}

ImputeResult impute_soft(const MaskedMatrix& m, int max_rank, double lambda, bool clip_nonnegative,
                         const Eigen::MatrixXd* warm) {
  check_shape(m);
  const int mn = std::min(m.rows(), m.cols());
  if (max_rank < 1 || max_rank > mn) throw ConfigError("max_rank must lie in [1, min(n_S, n_H)]");
  if (!(lambda >= 0.0)) throw ConfigError("shrinkage must be non-negative");

  ImputeResult res;
  Eigen::MatrixXd Z = warm ? *warm : impute_naive(m);
  Eigen::MatrixXd X(m.rows(), m.cols());
  res.converged = false;
  for (int it = 1; it <= 500; ++it) {
    X = m.mask.select(m.values, Z);
    Svd s = svd_truncated(X, max_rank, 1e-9, 0x5eed, lambda);
    Eigen::VectorXd shr = (s.sigma.array() - lambda).max(0.0).matrix();
    Eigen::MatrixXd Zn = s.U * shr.asDiagonal() * s.V.transpose();
    double denom = Z.norm();
    double change = (Zn - Z).norm();
    Z = std::move(Zn);
    res.iterations = it;
    if (denom == 0.0 ? change == 0.0 : change / denom < 1e-6) {
      res.converged = true;
      break;
    }
  }
  if (!res.converged) res.note = "soft-impute reached the iteration limit";
  res.values = m.mask.select(m.values, clip_nonnegative ? Eigen::MatrixXd(Z.cwiseMax(0.0)) : Z);
  return res;
}

double naive_sigma1(const MaskedMatrix& m) {
  Eigen::MatrixXd f = impute_naive(m);
  return svd_truncated(f, 1).sigma(0);
}

ImputeResult impute_with(const MaskedMatrix& m, const ImputeModel& model) {
  switch (model.method) {
    case ImputeMethod::NI: return {impute_naive(m), true, 0, {}};
    case ImputeMethod::KNN: return impute_knn(m, model.k);
    case ImputeMethod::SI: return impute_soft(m, model.max_rank, model.lambda);
  }
  throw EstimationError("unknown imputation method");
}

ImputeModel cv_select(const MaskedMatrix& m, ImputeMethod method, const CvGrid& grid, std::uint64_t seed) {
  check_shape(m);
  ImputeModel model;
  model.method = method;
  if (method == ImputeMethod::NI) return model;
  if (m.observed() < 20) {
    model.method = ImputeMethod::NI;
    model.warnings.push_back("fewer than 20 observed entries; naive imputation used");
    return model;
  }

  std::vector<std::pair<int, int>> obs;
  for (int j = 0; j < m.cols(); ++j)
    for (int i = 0; i < m.rows(); ++i)
      if (m.mask(i, j)) obs.emplace_back(i, j);
  Rng rng(seed);
  rng.shuffle(obs.begin(), obs.end());
  const auto n_hide = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(0.1 * static_cast<double>(obs.size()))));
  std::vector<std::pair<int, int>> hidden(obs.begin(), obs.begin() + static_cast<std::ptrdiff_t>(n_hide));
  MaskedMatrix train = m;
  for (auto [i, j] : hidden) train.mask(i, j) = false;

  double best = std::numeric_limits<double>::infinity();
  const int mn = std::min(m.rows(), m.cols());
  if (method == ImputeMethod::KNN) {
    for (int k : grid.ks) {
      auto r = impute_knn(train, k);
      double sc = hidden_smape1(m.values, r.values, hidden);
      model.cv_report.push_back({k, 0, 0.0, sc});
      if (improves(sc, best)) {
        best = sc;
        model.k = k;
      }
    }
    if (model.cv_report.empty()) throw ConfigError("empty knn candidate grid");
    return model;
  }

  std::vector<int> ranks;
  for (int r : grid.ranks)
    if (r >= 1 && r <= mn) ranks.push_back(r);
  if (ranks.empty()) ranks.push_back(std::min(mn, grid.ranks.empty() ? 1 : std::max(1, grid.ranks.front())));
  std::sort(ranks.begin(), ranks.end());
  std::vector<double> fracs = grid.lambda_fracs;
  if (fracs.empty()) throw ConfigError("empty shrinkage candidate grid");
  std::sort(fracs.begin(), fracs.end(), std::greater<>());

  const double s1_train = naive_sigma1(train);
  for (int r : ranks) {
    std::optional<Eigen::MatrixXd> warm;
    for (double f : fracs) {
      auto res = impute_soft(train, r, f * s1_train, false, warm ? &*warm : nullptr);
      warm = res.values;
      Eigen::MatrixXd clipped = res.values.cwiseMax(0.0);
      double sc = hidden_smape1(m.values, clipped, hidden);
      model.cv_report.push_back({0, r, f, sc});
      if (improves(sc, best)) {
        best = sc;
        model.max_rank = r;
        model.lambda_frac = f;
      }
    }
  }
  model.lambda = model.lambda_frac * naive_sigma1(m);
  return model;
}

}  // namespace avtse
