#include "regression.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>

#include "csv.hpp"
#include "errors.hpp"
#include "rng.hpp"

namespace avtse {

StencilSpec StencilSpec::narrow() {
  return {StencilVariant::Narrow, {{0, 0, 0}, {0, -1, 0}, {0, 0, -1}, {0, 0, 1}}};
}

StencilSpec StencilSpec::wide() {
  StencilSpec out{StencilVariant::Wide, {}};
  for (int dl : {0, -1, 1})
    for (auto o : narrow().offsets) out.offsets.push_back({dl, o.dh, o.ds});
  return out;
}

std::vector<double> stencil_features(std::span<const Eigen::MatrixXd> k_hat, int lane_idx, int h, int s,
                                     const StencilSpec& spec) {
  std::vector<double> out(spec.size(), 0.0);
  std::vector<char> inside(spec.size(), 0);
  double sum = 0.0;
  int n = 0;
  const int n_lanes = static_cast<int>(k_hat.size());
  for (std::size_t i = 0; i < spec.size(); ++i) {
    const auto& o = spec.offsets[i];
    int l = lane_idx + o.dlane, hh = h + o.dh, ss = s + o.ds;
    if (l < 0 || l >= n_lanes) continue;
    const auto& m = k_hat[static_cast<std::size_t>(l)];
    if (hh < 0 || hh >= m.cols() || ss < 0 || ss >= m.rows()) continue;
    out[i] = m(ss, hh);
    inside[i] = 1;
    sum += out[i];
    ++n;
  }
  const double fill = n > 0 ? sum / n : 0.0;
  for (std::size_t i = 0; i < spec.size(); ++i)
    if (!inside[i]) out[i] = fill;
  return out;
}

double LassoModel::predict(std::span<const double> x) const {
  double v = intercept;
  for (Eigen::Index j = 0; j < weights.size(); ++j) v += weights(j) * x[static_cast<std::size_t>(j)];
  return v;
}

namespace {

struct Standardized {
  Eigen::MatrixXd Xs;
  Eigen::VectorXd mean, scale;
  Eigen::VectorXd yc;
  double ymean = 0.0;
  std::vector<char> active;
};

Standardized standardize(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  Standardized s;
  const auto n = static_cast<double>(X.rows());
  s.mean = X.colwise().mean().transpose();
  s.Xs = X.rowwise() - s.mean.transpose();
  s.scale.resize(X.cols());
  s.active.assign(static_cast<std::size_t>(X.cols()), 1);
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    double sd = std::sqrt(s.Xs.col(j).squaredNorm() / n);
    if (sd <= 1e-12 * (1.0 + std::abs(s.mean(j)))) {
      sd = 1.0;
      s.active[static_cast<std::size_t>(j)] = 0;
      s.Xs.col(j).setZero();
    }
    s.scale(j) = sd;
    s.Xs.col(j) /= sd;
  }
  s.ymean = y.mean();
  s.yc = y.array() - s.ymean;
  return s;
}

double soft(double z, double l) { return z > l ? z - l : (z < -l ? z + l : 0.0); }

double smape1_pairs(std::span<const double> z, std::span<const double> zh) {
  double sum = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (z[i] + zh[i] == 0.0) continue;
    sum += std::abs(z[i] - zh[i]) / (z[i] + zh[i]);
    ++n;
  }
  return n > 0 ? sum / n : 0.0;
}

bool improves(double score, double best) { return score < best * (1.0 - 1e-3); }

}  // namespace

double lasso_lambda_max(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  if (X.rows() < 1) return 0.0;
  auto s = standardize(X, y);
  return (s.Xs.transpose() * s.yc).cwiseAbs().maxCoeff() / static_cast<double>(X.rows());
}

LassoModel lasso_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda, const Eigen::VectorXd* warm) {
  if (X.rows() < 2) throw EstimationError("lasso needs at least 2 samples");
  if (X.rows() != y.size()) throw EstimationError("lasso design and target sizes differ");
  if (!(lambda >= 0.0)) throw ConfigError("lasso penalty must be non-negative");
  const auto p = X.cols();
  const double n = static_cast<double>(X.rows());
  auto s = standardize(X, y);

  LassoModel m;
  m.lambda = lambda;
  m.mean = s.mean;
  m.scale = s.scale;
  Eigen::VectorXd w = warm && warm->size() == p ? *warm : Eigen::VectorXd::Zero(p);
  for (Eigen::Index j = 0; j < p; ++j)
    if (!s.active[static_cast<std::size_t>(j)]) w(j) = 0.0;
  Eigen::VectorXd r = s.yc - s.Xs * w;
  auto objective = [&] { return r.squaredNorm() / (2.0 * n) + lambda * w.lpNorm<1>(); };

  m.converged = false;
  for (int sweep = 1; sweep <= 10000; ++sweep) {
    double max_delta = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (!s.active[static_cast<std::size_t>(j)]) continue;
      double rho = s.Xs.col(j).dot(r) / n + w(j);
      double wj = soft(rho, lambda);
      double d = wj - w(j);
      if (d != 0.0) {
        r -= d * s.Xs.col(j);
        w(j) = wj;
      }
      max_delta = std::max(max_delta, std::abs(d));
    }
    m.sweeps = sweep;
    m.objective_trace.push_back(objective());
    if (max_delta < 1e-7) {
      m.converged = true;
      break;
    }
  }
  m.std_weights = w;
  m.weights = w.cwiseQuotient(s.scale);
  m.intercept = s.ymean - m.weights.dot(s.mean);
  return m;
}

double ForestModel::predict(std::span<const double> x) const {
  if (trees.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& t : trees) {
    int i = 0;
    while (t[static_cast<std::size_t>(i)].feature >= 0) {
      const auto& nd = t[static_cast<std::size_t>(i)];
      i = x[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right;
    }
    sum += t[static_cast<std::size_t>(i)].value;
  }
  return sum / static_cast<double>(trees.size());
}

namespace {

class TreeBuilder {
 public:
  TreeBuilder(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const ForestParams& p, Rng& rng)
      : X_(X), y_(y), p_(p), rng_(rng), mtry_(static_cast<int>(std::ceil(static_cast<double>(X.cols()) / 3.0))) {
    features_.resize(static_cast<std::size_t>(X.cols()));
    std::iota(features_.begin(), features_.end(), 0);
  }

  int build(std::vector<int>& idx, int depth, std::vector<TreeNode>& nodes) {
    const int id = static_cast<int>(nodes.size());
    nodes.emplace_back();
    double sum = 0.0, sq = 0.0;
    for (int i : idx) {
      sum += y_(i);
      sq += y_(i) * y_(i);
    }
    const double cnt = static_cast<double>(idx.size());
    nodes[static_cast<std::size_t>(id)].value = sum / cnt;
    const double sse = sq - sum * sum / cnt;
    if (depth >= p_.max_depth || idx.size() < 2 * static_cast<std::size_t>(p_.min_leaf) || sse <= 1e-12 * (1.0 + sq))
      return id;

    // partial shuffle picks the feature subset
    for (int k = 0; k < mtry_; ++k) {
      std::size_t j = static_cast<std::size_t>(k) + rng_.index(features_.size() - static_cast<std::size_t>(k));
      std::swap(features_[static_cast<std::size_t>(k)], features_[j]);
    }
    int best_f = -1;
    double best_sse = sse, best_thr = 0.0;
    std::vector<int> order = idx;
    for (int k = 0; k < mtry_; ++k) {
      const int f = features_[static_cast<std::size_t>(k)];
      std::sort(order.begin(), order.end(), [&](int a, int b) { return X_(a, f) < X_(b, f); });
      double ls = 0.0, lq = 0.0;
      const std::size_t n = order.size();
      for (std::size_t i = 0; i + 1 < n; ++i) {
        double v = y_(order[i]);
        ls += v;
        lq += v * v;
        const std::size_t nl = i + 1, nr = n - nl;
        if (nl < static_cast<std::size_t>(p_.min_leaf) || nr < static_cast<std::size_t>(p_.min_leaf)) continue;
        double xa = X_(order[i], f), xb = X_(order[i + 1], f);
        if (!(xa < xb)) continue;
        double rs = sum - ls, rq = sq - lq;
        double s = (lq - ls * ls / static_cast<double>(nl)) + (rq - rs * rs / static_cast<double>(nr));
        if (s < best_sse - 1e-12 * (1.0 + std::abs(best_sse))) {
          best_sse = s;
          best_f = f;
          best_thr = 0.5 * (xa + xb);
        }
      }
    }
    if (best_f < 0) return id;

    std::vector<int> left, right;
    for (int i : idx) (X_(i, best_f) <= best_thr ? left : right).push_back(i);
    idx.clear();
    idx.shrink_to_fit();
    int l = build(left, depth + 1, nodes);
    int r = build(right, depth + 1, nodes);
    auto& nd = nodes[static_cast<std::size_t>(id)];
    nd.feature = best_f;
    nd.threshold = best_thr;
    nd.left = l;
    nd.right = r;
    return id;
  }

 private:
  const Eigen::MatrixXd& X_;
  const Eigen::VectorXd& y_;
  ForestParams p_;
  Rng& rng_;
  int mtry_;
  std::vector<int> features_;
};

}  // namespace

ForestModel forest_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const ForestParams& params,
                       std::uint64_t seed) {
  if (params.n_trees < 1 || params.max_depth < 0 || params.min_leaf < 1)
    throw ConfigError("invalid forest hyperparameters");
  if (X.rows() < params.min_leaf || X.rows() < 1) throw EstimationError("forest needs at least min_leaf samples");
  if (X.rows() != y.size()) throw EstimationError("forest design and target sizes differ");
  ForestModel m;
  m.params = params;
  m.seed = seed;
  const auto n = static_cast<std::size_t>(X.rows());
  for (int t = 0; t < params.n_trees; ++t) {
    Rng rng(mix_seed(seed, {static_cast<std::uint64_t>(t)}));
    std::vector<int> idx(n);
    for (auto& i : idx) i = static_cast<int>(rng.index(n));
    TreeBuilder tb(X, y, params, rng);
    std::vector<TreeNode> nodes;
    tb.build(idx, 0, nodes);
    m.trees.push_back(std::move(nodes));
  }
  return m;
}

const char* speed_method_name(SpeedMethod m) {
  switch (m) {
    case SpeedMethod::LR1: return "LR1";
    case SpeedMethod::LR2: return "LR2";
    case SpeedMethod::RF1: return "RF1";
    case SpeedMethod::RF2: return "RF2";
    case SpeedMethod::NI: return "NI";
    case SpeedMethod::KNN: return "KNN";
    case SpeedMethod::SI: return "SI";
  }
  return "?";
}

SpeedMethod parse_speed_method(const std::string& s) {
  for (auto m : {SpeedMethod::LR1, SpeedMethod::LR2, SpeedMethod::RF1, SpeedMethod::RF2, SpeedMethod::NI,
                 SpeedMethod::KNN, SpeedMethod::SI})
    if (s == speed_method_name(m)) return m;
  throw ConfigError("unknown speed method: " + s);
}

namespace {

ImputeMethod as_imputer(SpeedMethod m) {
  switch (m) {
    case SpeedMethod::NI: return ImputeMethod::NI;
    case SpeedMethod::KNN: return ImputeMethod::KNN;
    default: return ImputeMethod::SI;
  }
}

void impute_lane(const CellField& v_obs, ImputeMethod method, const SpeedOptions& opts, std::uint64_t seed,
                 CellField& out, SpeedLaneReport& rep) {
  auto mm = MaskedMatrix::from_field(v_obs);
  if (mm.observed() == 0) throw EstimationError("lane " + std::to_string(v_obs.lane) + " has no observed speeds");
  rep.imputer = cv_select(mm, method, opts.imputer_grid, seed);
  for (auto& w : rep.imputer.warnings) rep.warnings.push_back(w);
  auto r = impute_with(mm, rep.imputer);
  if (!r.note.empty()) rep.warnings.push_back(r.note);
  for (int s = 0; s < out.rows(); ++s)
    for (int h = 0; h < out.cols(); ++h) out.set(s, h, r.values(s, h));
}

}  // namespace

SpeedEstimate estimate_speed(std::span<const CellField> v_obs, std::span<const CellField> k_hat,
                             const SpeedOptions& opts) {
  if (v_obs.size() != k_hat.size()) throw EstimationError("speed and density lane counts differ");
  if (opts.folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
  std::vector<Eigen::MatrixXd> kmat;
  for (const auto& k : k_hat) {
    if (k.defined_count() != static_cast<std::size_t>(k.rows() * k.cols()))
      throw EstimationError("density field must be complete before speed estimation");
    kmat.push_back(k.values);
  }

  SpeedEstimate out;
  const bool regression = opts.method == SpeedMethod::LR1 || opts.method == SpeedMethod::LR2 ||
                          opts.method == SpeedMethod::RF1 || opts.method == SpeedMethod::RF2;
  const bool lasso = opts.method == SpeedMethod::LR1 || opts.method == SpeedMethod::LR2;
  const StencilSpec spec =
      opts.method == SpeedMethod::LR1 || opts.method == SpeedMethod::RF1 ? StencilSpec::narrow() : StencilSpec::wide();

  for (std::size_t li = 0; li < v_obs.size(); ++li) {
    const CellField& vo = v_obs[li];
    const int n_s = vo.rows(), n_h = vo.cols();
    CellField vh(vo.lane, Quantity::Speed, n_s, n_h);
    SpeedLaneReport rep;
    rep.lane = vo.lane;
    rep.method = speed_method_name(opts.method);
    rep.observed = vo.defined_count();
    const std::uint64_t lane_seed = mix_seed(opts.seed, {static_cast<std::uint64_t>(vo.lane), 0x5eedULL});

    if (rep.observed == 0) {
      double sum = 0.0;
      std::size_t cnt = 0;
      for (const auto& other : v_obs)
        for (int s = 0; s < other.rows(); ++s)
          for (int h = 0; h < other.cols(); ++h)
            if (other.defined(s, h)) {
              sum += other.values(s, h);
              ++cnt;
            }
      if (cnt == 0) throw EstimationError("no observed speeds on any lane");
      rep.fallback = true;
      rep.warnings.push_back("no observed speeds on this lane; filled with the mean over other lanes");
      for (int s = 0; s < n_s; ++s)
        for (int h = 0; h < n_h; ++h) vh.set(s, h, sum / static_cast<double>(cnt));
    } else if (!regression) {
      impute_lane(vo, as_imputer(opts.method), opts, lane_seed, vh, rep);
    } else if (rep.observed < 10) {
      rep.fallback = true;
      rep.warnings.push_back("fewer than 10 observed speed cells; soft-impute used for this lane");
      impute_lane(vo, ImputeMethod::SI, opts, lane_seed, vh, rep);
    } else {
      const auto p = static_cast<Eigen::Index>(spec.size());
      std::vector<std::pair<int, int>> train_cells;
      for (int h = 0; h < n_h; ++h)
        for (int s = 0; s < n_s; ++s)
          if (vo.defined(s, h)) train_cells.emplace_back(s, h);
      const auto n = static_cast<Eigen::Index>(train_cells.size());
      Eigen::MatrixXd X(n, p);
      Eigen::VectorXd y(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        auto [s, h] = train_cells[static_cast<std::size_t>(i)];
        auto f = stencil_features(kmat, static_cast<int>(li), h, s, spec);
        for (Eigen::Index j = 0; j < p; ++j) X(i, j) = f[static_cast<std::size_t>(j)];
        y(i) = vo.values(s, h);
      }
      const double cap = 1.2 * y.maxCoeff();
      auto clip = [cap](double v) { return std::clamp(v, 0.0, cap); };

      const int folds = static_cast<int>(std::min<Eigen::Index>(opts.folds, n));
      std::vector<int> perm(static_cast<std::size_t>(n));
      std::iota(perm.begin(), perm.end(), 0);
      Rng frng(mix_seed(lane_seed, {1}));
      frng.shuffle(perm.begin(), perm.end());
      std::vector<int> fold_of(static_cast<std::size_t>(n));
      for (std::size_t i = 0; i < perm.size(); ++i) fold_of[static_cast<std::size_t>(perm[i])] = static_cast<int>(i % folds);

      auto split = [&](int f, Eigen::MatrixXd& Xtr, Eigen::VectorXd& ytr, Eigen::MatrixXd& Xte, Eigen::VectorXd& yte) {
        Eigen::Index ntr = 0, nte = 0;
        for (int g : fold_of) (g == f ? nte : ntr)++;
        Xtr.resize(ntr, p);
        ytr.resize(ntr);
        Xte.resize(nte, p);
        yte.resize(nte);
        Eigen::Index a = 0, b = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
          if (fold_of[static_cast<std::size_t>(i)] == f) {
            Xte.row(b) = X.row(i);
            yte(b++) = y(i);
          } else {
            Xtr.row(a) = X.row(i);
            ytr(a++) = y(i);
          }
        }
      };
      auto fold_score = [&](const Eigen::MatrixXd& Xte, const Eigen::VectorXd& yte, auto&& predict) {
        std::vector<double> z(static_cast<std::size_t>(yte.size())), zh(z.size());
        for (Eigen::Index i = 0; i < yte.size(); ++i) {
          z[static_cast<std::size_t>(i)] = yte(i);
          Eigen::VectorXd row = Xte.row(i).transpose();
          zh[static_cast<std::size_t>(i)] = clip(predict(std::span<const double>(row.data(), static_cast<std::size_t>(p))));
        }
        return smape1_pairs(z, zh);
      };

      std::function<double(std::span<const double>)> model_predict;
      if (lasso) {
        const double lmax = lasso_lambda_max(X, y);
        std::vector<double> grid;
        for (int i = 0; i < 20; ++i) grid.push_back(lmax * std::pow(10.0, -4.0 * i / 19.0));
        std::vector<double> score(grid.size(), 0.0);
        for (int f = 0; f < folds; ++f) {
          Eigen::MatrixXd Xtr, Xte;
          Eigen::VectorXd ytr, yte;
          split(f, Xtr, ytr, Xte, yte);
          if (Xtr.rows() < 2) continue;
          Eigen::VectorXd warm = Eigen::VectorXd::Zero(p);
          for (std::size_t g = 0; g < grid.size(); ++g) {
            auto m = lasso_fit(Xtr, ytr, grid[g], &warm);
            warm = m.std_weights;
            score[g] += fold_score(Xte, yte, [&](std::span<const double> x) { return m.predict(x); }) / folds;
          }
        }
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t g = 0; g < grid.size(); ++g) {
          rep.cv.emplace_back("lambda=" + csv::format_double(grid[g]), score[g]);
          if (improves(score[g], best)) {
            best = score[g];
            rep.lambda = grid[g];
          }
        }
        rep.lasso = lasso_fit(X, y, rep.lambda);
        if (!rep.lasso.converged) rep.warnings.push_back("lasso reached the sweep limit");
        model_predict = [m = rep.lasso](std::span<const double> x) { return m.predict(x); };
      } else {
        if (opts.forest_grid.empty()) throw ConfigError("empty forest candidate grid");
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < opts.forest_grid.size(); ++c) {
          const auto& fp = opts.forest_grid[c];
          double sc = 0.0;
          for (int f = 0; f < folds; ++f) {
            Eigen::MatrixXd Xtr, Xte;
            Eigen::VectorXd ytr, yte;
            split(f, Xtr, ytr, Xte, yte);
            if (Xtr.rows() < fp.min_leaf) continue;
            auto m = forest_fit(Xtr, ytr, fp, mix_seed(lane_seed, {2, static_cast<std::uint64_t>(f)}));
            sc += fold_score(Xte, yte, [&](std::span<const double> x) { return m.predict(x); }) / folds;
          }
          rep.cv.emplace_back("n_trees=" + std::to_string(fp.n_trees) + ";max_depth=" + std::to_string(fp.max_depth), sc);
          if (improves(sc, best)) {
            best = sc;
            rep.forest = fp;
          }
        }
        auto model = std::make_shared<ForestModel>(forest_fit(X, y, rep.forest, mix_seed(lane_seed, {3})));
        model_predict = [model](std::span<const double> x) { return model->predict(x); };
      }

      for (int h = 0; h < n_h; ++h)
        for (int s = 0; s < n_s; ++s) {
          if (vo.defined(s, h)) {
            vh.set(s, h, vo.values(s, h));
            continue;
          }
          auto f = stencil_features(kmat, static_cast<int>(li), h, s, spec);
          vh.set(s, h, clip(model_predict(f)));
        }
    }
    out.v_hat.push_back(std::move(vh));
    out.lanes.push_back(std::move(rep));
  }
  return out;
}

std::string format_lasso_coefficients(std::span<const SpeedLaneReport> lanes) {
  std::ostringstream os;
  os << "lane,feature,weight,standardized_weight\n";
  for (const auto& r : lanes) {
    if (r.lasso.weights.size() == 0) continue;
    for (Eigen::Index j = 0; j < r.lasso.weights.size(); ++j)
      os << r.lane << ",x" << (j + 1) << ',' << csv::format_double(r.lasso.weights(j)) << ','
         << csv::format_double(r.lasso.std_weights(j)) << '\n';
    os << r.lane << ",intercept," << csv::format_double(r.lasso.intercept) << ",\n";
  }
  return os.str();
}

}  // namespace avtse
