#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "regression.hpp"
#include "rng.hpp"

using namespace avtse;

TEST_CASE("stencil features and fill") {
  std::vector<Eigen::MatrixXd> k;
  for (int l = 0; l < 3; ++l) {
    Eigen::MatrixXd m(5, 6);
    for (int s = 0; s < 5; ++s)
      for (int h = 0; h < 6; ++h) m(s, h) = 100 * l + 10 * s + h;
    k.push_back(m);
  }
  auto wide = StencilSpec::wide(), narrow = StencilSpec::narrow();
  CHECK(wide.size() == 12);
  CHECK(narrow.size() == 4);

  auto f = stencil_features(k, 1, 3, 2, wide);
  REQUIRE(f.size() == 12);
  CHECK(f[0] == 123);  // own cell first
  for (double v : f) CHECK(v >= 0);

  // lane 0 has no left neighbour: 4 slots take the in-domain mean
  auto e = stencil_features(k, 0, 3, 2, wide);
  REQUIRE(e.size() == 12);
  double sum = 0;
  int in = 0;
  for (std::size_t i = 0; i < 12; ++i) {
    auto o = wide.offsets[i];
    if (o.dlane != -1) {
      sum += e[i];
      ++in;
    }
  }
  for (std::size_t i = 0; i < 12; ++i)
    if (wide.offsets[i].dlane == -1) CHECK(e[i] == doctest::Approx(sum / in));

  auto b = stencil_features(k, 1, 0, 2, narrow);
  double own = 120, up = 110, down = 130;
  for (std::size_t i = 0; i < 4; ++i)
    if (narrow.offsets[i].dh == -1) CHECK(b[i] == doctest::Approx((own + up + down) / 3));
}

TEST_CASE("lasso soft threshold on an orthonormal design") {
  const int n = 8;
  Eigen::MatrixXd X(n, 3);
  // columns: mean 0, population std 1, mutually orthogonal
  X << 1, 1, 1, -1, 1, -1, 1, -1, -1, -1, -1, 1, 1, 1, -1, -1, 1, 1, 1, -1, 1, -1, -1, -1;
  REQUIRE((X.transpose() * X / n - Eigen::MatrixXd::Identity(3, 3)).norm() < 1e-12);
  Eigen::VectorXd beta(3);
  beta << 2.0, -0.3, 0.8;
  Eigen::VectorXd y = X * beta + Eigen::VectorXd::Constant(n, 4.0);
  auto m = lasso_fit(X, y, 0.5);
  CHECK(m.std_weights(0) == doctest::Approx(1.5).epsilon(1e-6));
  CHECK(m.std_weights(1) == doctest::Approx(0.0));
  CHECK(m.std_weights(2) == doctest::Approx(0.3).epsilon(1e-6));
  CHECK(m.intercept == doctest::Approx(4.0));

  Eigen::MatrixXd x1(4, 1);
  x1 << 1, -1, 1, -1;
  Eigen::VectorXd y1 = 2.0 * x1.col(0);
  CHECK(std::abs(lasso_fit(x1, y1, 0.5).weights(0) - 1.5) < 1e-6);
}

TEST_CASE("lasso without penalty solves least squares") {
  Rng rng(3);
  Eigen::MatrixXd X(50, 4);
  Eigen::VectorXd y(50);
  for (int i = 0; i < 50; ++i) {
    for (int j = 0; j < 4; ++j) X(i, j) = rng.uniform(-2, 2) + j;
    y(i) = 1.0 + X.row(i).sum() * 0.5 + rng.uniform(-0.1, 0.1) - X(i, 2);
  }
  Eigen::MatrixXd A(50, 5);
  A << X, Eigen::VectorXd::Ones(50);
  Eigen::VectorXd sol = (A.transpose() * A).ldlt().solve(A.transpose() * y);
  auto m = lasso_fit(X, y, 0.0);
  for (int j = 0; j < 4; ++j) CHECK(std::abs(m.weights(j) - sol(j)) < 1e-6);
  CHECK(std::abs(m.intercept - sol(4)) < 1e-6);
  CHECK(m.converged);
  for (std::size_t i = 1; i < m.objective_trace.size(); ++i)
    CHECK(m.objective_trace[i] <= m.objective_trace[i - 1] + 1e-12);
}

TEST_CASE("lasso null model at lambda max") {
  Rng rng(4);
  Eigen::MatrixXd X(30, 3);
  Eigen::VectorXd y(30);
  for (int i = 0; i < 30; ++i) {
    for (int j = 0; j < 3; ++j) X(i, j) = rng.uniform();
    y(i) = 3 * X(i, 0) + rng.uniform();
  }
  double lmax = lasso_lambda_max(X, y);
  for (double l : {lmax, 2 * lmax}) {
    auto m = lasso_fit(X, y, l);
    CHECK(m.weights.norm() == 0.0);
    CHECK(m.intercept == doctest::Approx(y.mean()));
  }
  CHECK(lasso_fit(X, y, 0.9 * lmax).weights.norm() > 0.0);
}

TEST_CASE("zero-variance features are inactive") {
  Eigen::MatrixXd X(6, 2);
  X << 1, 5, 2, 5, 3, 5, 4, 5, 5, 5, 6, 5;
  Eigen::VectorXd y = 2.0 * X.col(0);
  auto m = lasso_fit(X, y, 0.0);
  CHECK(m.weights(1) == 0.0);
  CHECK(m.weights(0) == doctest::Approx(2.0));
}

TEST_CASE("forest") {
  Rng rng(1);
  Eigen::MatrixXd X(200, 3);
  for (int i = 0; i < 200; ++i)
    for (int j = 0; j < 3; ++j) X(i, j) = rng.uniform();
  Eigen::VectorXd c = Eigen::VectorXd::Constant(200, 7.0);
  auto fc = forest_fit(X, c, {}, 1);
  std::vector<double> x{0.3, 0.2, 0.9};
  CHECK(fc.predict(x) == doctest::Approx(7.0));

  // step in a single feature; one split suffices
  Eigen::MatrixXd X1 = X.col(1);
  Eigen::VectorXd y(200);
  for (int i = 0; i < 200; ++i) y(i) = X(i, 1) > 0.4 ? 10.0 : 2.0;
  double var = (y.array() - y.mean()).square().mean();
  ForestParams p1;
  p1.n_trees = 30;
  p1.max_depth = 1;
  auto f1 = forest_fit(X1, y, p1, 5);
  double mse1 = 0;
  for (int i = 0; i < 200; ++i) {
    std::vector<double> xi{X(i, 1)};
    mse1 += std::pow(f1.predict(xi) - y(i), 2) / 200;
  }
  CHECK(mse1 < var / 10);

  // same step among two noise features, deep enough to find it
  ForestParams p;
  p.n_trees = 30;
  p.max_depth = 6;
  auto f = forest_fit(X, y, p, 5);
  double mse = 0;
  for (int i = 0; i < 200; ++i) {
    std::vector<double> xi{X(i, 0), X(i, 1), X(i, 2)};
    mse += std::pow(f.predict(xi) - y(i), 2) / 200;
  }
  CHECK(mse < var / 10);

  auto g = forest_fit(X, y, p, 5);
  for (int i = 0; i < 20; ++i) {
    std::vector<double> xi{X(i, 0), X(i, 1), X(i, 2)};
    CHECK(g.predict(xi) == f.predict(xi));
  }
}

namespace {
CellField kfield(int lane, int n_s, int n_h, double phase) {
  CellField k(lane, Quantity::Density, n_s, n_h);
  for (int s = 0; s < n_s; ++s)
    for (int h = 0; h < n_h; ++h) k.set(s, h, 0.08 + 0.06 * std::sin(0.3 * s + 0.2 * h + phase));
  return k;
}
}  // namespace

TEST_CASE("speed estimation copies observed cells") {
  std::vector<CellField> k{kfield(1, 6, 8, 0)}, v;
  CellField vo(1, Quantity::Speed, 6, 8);
  for (int s = 0; s < 6; ++s)
    for (int h = 0; h < 8; ++h) vo.set(s, h, 5 + s + h);
  v.push_back(vo);
  auto est = estimate_speed(v, k, {});
  CHECK(est.v_hat[0].values == vo.values);
  CHECK(est.v_hat[0].defined_count() == 48);
}

TEST_CASE("linear speed-density relation is learned") {
  const int n_s = 20, n_h = 30;
  std::vector<CellField> k, v;
  Rng rng(8);
  std::vector<std::pair<int, int>> held;
  for (int l = 1; l <= 3; ++l) {
    k.push_back(kfield(l, n_s, n_h, l));
    CellField vo(l, Quantity::Speed, n_s, n_h);
    for (int s = 0; s < n_s; ++s)
      for (int h = 0; h < n_h; ++h)
        if (rng.bernoulli(0.6)) vo.set(s, h, 20 - 100 * k.back().values(s, h));
    v.push_back(vo);
  }
  SpeedOptions o;
  o.method = SpeedMethod::LR2;
  o.seed = 1;
  auto est = estimate_speed(v, k, o);
  int n = 0;
  for (std::size_t l = 0; l < 3; ++l)
    for (int s = 0; s < n_s; ++s)
      for (int h = 0; h < n_h; ++h) {
        if (v[l].defined(s, h)) continue;
        double truth = 20 - 100 * k[l].values(s, h);
        CHECK(std::abs(est.v_hat[l].values(s, h) - truth) / truth < 0.02);
        ++n;
      }
  CHECK(n > 100);
  CHECK(est.lanes[0].lasso.weights(0) < 0);
  auto csv = format_lasso_coefficients(est.lanes);
  CHECK(csv.rfind("lane,feature,weight,standardized_weight\n", 0) == 0);
  CHECK(csv.find("intercept") != std::string::npos);
}

TEST_CASE("speed estimation fallbacks") {
  std::vector<CellField> k{kfield(1, 6, 8, 0), kfield(2, 6, 8, 1)}, v;
  CellField few(1, Quantity::Speed, 6, 8), none(2, Quantity::Speed, 6, 8);
  for (int i = 0; i < 5; ++i) few.set(i, i, 10);
  v = {few, none};
  auto est = estimate_speed(v, k, {});
  CHECK(est.lanes[0].fallback);
  CHECK(est.lanes[1].fallback);
  CHECK(!est.lanes[1].warnings.empty());
  CHECK(est.v_hat[1].defined_count() == 48);
  CHECK(est.v_hat[1].values(3, 3) == doctest::Approx(10.0));

  CellField partial = k[0];
  partial.clear(0, 0);
  std::vector<CellField> bad{partial, k[1]};
  CHECK_THROWS(estimate_speed(v, bad, {}));
}

TEST_CASE("random forest speed path is deterministic") {
  std::vector<CellField> k{kfield(1, 10, 12, 0)}, v;
  CellField vo(1, Quantity::Speed, 10, 12);
  Rng rng(2);
  for (int s = 0; s < 10; ++s)
    for (int h = 0; h < 12; ++h)
      if (rng.bernoulli(0.5)) vo.set(s, h, 15 - 80 * k[0].values(s, h));
  v.push_back(vo);
  SpeedOptions o;
  o.method = SpeedMethod::RF1;
  o.forest_grid = {{20, 4, 5}};
  auto a = estimate_speed(v, k, o), b = estimate_speed(v, k, o);
  CHECK(a.v_hat[0].values == b.v_hat[0].values);
  CHECK(a.v_hat[0].values.maxCoeff() <= 1.2 * 15 + 1e-9);
}
