#include <doctest.h>

#include "imputation.hpp"
#include "rng.hpp"

using namespace avtse;
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

namespace {
MaskedMatrix rank2(int m, int n, double hide, std::uint64_t seed, Eigen::MatrixXd* truth) {
  Rng rng(seed);
  Eigen::MatrixXd u(m, 2), v(n, 2);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < 2; ++j) u(i, j) = rng.uniform(0.5, 1.5);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 2; ++j) v(i, j) = rng.uniform(0.5, 1.5);
  *truth = u * v.transpose();
  Mask mask(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) mask(i, j) = !rng.bernoulli(hide);
  Eigen::MatrixXd vals = mask.select(*truth, 0.0);
  return {vals, mask};
}
}  // namespace

TEST_CASE("naive imputation") {
  Eigen::MatrixXd v(3, 2);
  v << 2, 1, 0, 9, 4, 9;
  Mask m(3, 2);
  m << true, false, false, false, true, false;
  auto out = impute_naive({v, m});
  CHECK(out(1, 0) == doctest::Approx(3.0));
  CHECK(out(0, 0) == 2.0);
  CHECK(out(0, 1) == doctest::Approx(3.0));  // empty column takes the global mean

  Mask full = Mask::Constant(3, 2, true);
  CHECK(impute_naive({v, full}) == v);
}

TEST_CASE("knn imputation") {
  Eigen::MatrixXd v(2, 3);
  v << 1, 1, 0, 1, 1, 9;
  Mask m(2, 3);
  m << true, true, false, true, true, true;
  auto out = impute_knn({v, m}, 1);
  CHECK(out.values(0, 2) == doctest::Approx(9.0));

  Eigen::MatrixXd w(4, 2);
  w << 0, 0, 1, 2, 5, 4, 9, 6;
  Mask mw(4, 2);
  mw << true, false, true, true, true, true, true, true;
  auto all = impute_knn({w, mw}, 10);
  CHECK(all.values(0, 1) == doctest::Approx(4.0));
  Mask full = Mask::Constant(4, 2, true);
  CHECK(impute_knn({w, full}, 3).values == w);
}

TEST_CASE("soft impute limits") {
  Eigen::MatrixXd v(2, 2);
  v << 1, 2, 2, 0;
  Mask m(2, 2);
  m << true, true, true, false;
  auto r = impute_soft({v, m}, 1, 1e-9);
  CHECK(r.values(1, 1) == doctest::Approx(4.0).epsilon(1e-3));
  CHECK(r.values(0, 1) == 2.0);

  auto big = impute_soft({v, m}, 1, 1e9, false);
  CHECK(big.values(1, 1) == doctest::Approx(0.0));
  CHECK(big.values(0, 0) == 1.0);
}

TEST_CASE("soft impute recovers a rank-2 matrix") {
  Eigen::MatrixXd truth;
  auto mm = rank2(60, 90, 0.4, 17, &truth);
  auto r = impute_soft(mm, 8, 0.01 * naive_sigma1(mm));
  CHECK((r.values - truth).norm() / truth.norm() < 0.05);
  for (int i = 0; i < 60; ++i)
    for (int j = 0; j < 90; ++j)
      if (mm.mask(i, j)) CHECK(r.values(i, j) == mm.values(i, j));
}

TEST_CASE("cross-validated selection") {
  Eigen::MatrixXd truth;
  auto mm = rank2(60, 90, 0.3, 5, &truth);
  CvGrid g;
  g.ranks = {1, 2, 4};
  g.lambda_fracs = {0.01};
  auto model = cv_select(mm, ImputeMethod::SI, g, 9);
  CHECK(model.max_rank == 2);
  CHECK(model.cv_report.size() == 3);
  auto again = cv_select(mm, ImputeMethod::SI, g, 9);
  CHECK(again.max_rank == model.max_rank);
  CHECK(again.cv_report[0].score == model.cv_report[0].score);

  CvGrid one;
  one.ks = {3};
  auto k = cv_select(mm, ImputeMethod::KNN, one, 1);
  CHECK(k.k == 3);

  // three smooth rows repeated: selection among k is deterministic
  Eigen::MatrixXd s(30, 40);
  for (int i = 0; i < 30; ++i)
    for (int j = 0; j < 40; ++j) s(i, j) = 1.0 + (i % 3) + 0.1 * std::sin(0.2 * j + i % 3);
  Mask sm = Mask::Constant(30, 40, true);
  Rng rng(4);
  for (int i = 0; i < 30; ++i)
    for (int j = 0; j < 40; ++j) sm(i, j) = !rng.bernoulli(0.2);
  CvGrid kg;
  kg.ks = {1, 3, 5};
  auto a = cv_select({s, sm}, ImputeMethod::KNN, kg, 2), b = cv_select({s, sm}, ImputeMethod::KNN, kg, 2);
  CHECK(a.k == b.k);
  double best = 1e300;
  for (const auto& c : a.cv_report) best = std::min(best, c.score);
  for (const auto& c : a.cv_report)
    if (c.k == a.k) CHECK(c.score <= best * (1 + 1e-3) + 1e-15);
}

TEST_CASE("too few observations fall back to the naive fill") {
  Eigen::MatrixXd v = Eigen::MatrixXd::Constant(4, 4, 2.0);
  Mask m = Mask::Constant(4, 4, false);
  m(0, 0) = m(1, 1) = m(2, 2) = true;
  auto model = cv_select({v, m}, ImputeMethod::SI, CvGrid{}, 1);
  CHECK(model.method == ImputeMethod::NI);
  CHECK(!model.warnings.empty());
  auto r = impute_with({v, m}, model);
  CHECK(r.values(3, 3) == doctest::Approx(2.0));
}

TEST_CASE("method names") {
  for (auto m : {ImputeMethod::NI, ImputeMethod::KNN, ImputeMethod::SI})
    CHECK(parse_impute_method(impute_method_name(m)) == m);
  CHECK_THROWS(parse_impute_method("foo"));
}
