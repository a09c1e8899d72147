#include "svd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "rng.hpp"

namespace avtse {

namespace {

// Orthonormal vector orthogonal to the first `k` columns of `basis`.
Eigen::VectorXd random_orthogonal(const Eigen::MatrixXd& basis, int k, Rng& rng) {
  const auto n = basis.rows();
  for (int attempt = 0; attempt < 8; ++attempt) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.uniform(-1.0, 1.0);
    for (int pass = 0; pass < 2; ++pass)
      for (int j = 0; j < k; ++j) v -= basis.col(j).dot(v) * basis.col(j);
    double nv = v.norm();
    if (nv > 1e-8) return v / nv;
  }
  return Eigen::VectorXd::Zero(n);
}

void reorthogonalize(Eigen::VectorXd& v, const Eigen::MatrixXd& basis, int k) {
  for (int pass = 0; pass < 2; ++pass)
    for (int j = 0; j < k; ++j) v -= basis.col(j).dot(v) * basis.col(j);
}

Svd svd_tall(const Eigen::MatrixXd& a, int r, double tol, std::uint64_t seed, double threshold) {
  const int m = static_cast<int>(a.rows()), n = static_cast<int>(a.cols());
  Rng rng(seed);
  const double anorm = a.norm();
  if (anorm == 0.0) {
    Svd out;
    out.sigma = Eigen::VectorXd::Zero(r);
    out.U = Eigen::MatrixXd::Identity(m, r);
    out.V = Eigen::MatrixXd::Identity(n, r);
    return out;
  }
  const double tiny = 1e-14 * anorm;

  Eigen::MatrixXd P(n, n + 1), Uk(m, n);
  std::vector<double> alpha, beta;
  P.col(0) = random_orthogonal(P, 0, rng);

  Svd best;
  int next_check = 0;
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXd u = a * P.col(j);
    if (j > 0) u -= beta[j - 1] * Uk.col(j - 1);
    reorthogonalize(u, Uk, j);
    double al = u.norm();
    if (al <= tiny) {
      al = 0.0;
      Uk.col(j) = random_orthogonal(Uk, j, rng);
    } else {
      Uk.col(j) = u / al;
    }
    alpha.push_back(al);

    Eigen::VectorXd v = a.transpose() * Uk.col(j) - al * P.col(j);
    reorthogonalize(v, P, j + 1);
    double be = v.norm();
    const bool last = j + 1 == n;
    if (!last) {
      if (be <= tiny) {
        be = 0.0;
        P.col(j + 1) = random_orthogonal(P, j + 1, rng);
      } else {
        P.col(j + 1) = v / be;
      }
    }
    beta.push_back(last ? 0.0 : be);

    const int k = j + 1;
    if (!last && (k < r + 2 || k < next_check)) continue;
    next_check = k + std::max(3, k / 4);

    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(k, k);
    for (int i = 0; i < k; ++i) {
      B(i, i) = alpha[i];
      if (i + 1 < k) B(i, i + 1) = beta[i];
    }
    Svd small = jacobi_svd(B);
    const double s1 = small.sigma(0);
    bool ok = true;
    for (int i = 0; i < r && !last; ++i) {
      const double res = beta[k - 1] * std::abs(small.U(k - 1, i));
      // triplets certainly below the threshold need no accuracy
      if (res > tol * s1 && small.sigma(i) + res >= threshold) ok = false;
    }
    if (ok || last) {
      best.sigma = small.sigma.head(r);
      best.U = Uk.leftCols(k) * small.U.leftCols(r);
      best.V = P.leftCols(k) * small.V.leftCols(r);
      return best;
    }
  }
  return best;
}

}  // namespace

Svd jacobi_svd(const Eigen::MatrixXd& a) {
  const bool flip = a.rows() < a.cols();
  Eigen::MatrixXd W = flip ? Eigen::MatrixXd(a.transpose()) : a;
  const int m = static_cast<int>(W.rows()), n = static_cast<int>(W.cols());
  Eigen::MatrixXd V = Eigen::MatrixXd::Identity(n, n);
  const double eps = 1e-15;
  for (int sweep = 0; sweep < 80; ++sweep) {
    bool rotated = false;
    for (int p = 0; p < n - 1; ++p)
      for (int q = p + 1; q < n; ++q) {
        double alpha = W.col(p).squaredNorm(), beta = W.col(q).squaredNorm();
        double gamma = W.col(p).dot(W.col(q));
        if (gamma == 0.0 || std::abs(gamma) <= eps * std::sqrt(alpha * beta)) continue;
        rotated = true;
        double zeta = (beta - alpha) / (2.0 * gamma);
        double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        double c = 1.0 / std::sqrt(1.0 + t * t), s = c * t;
        for (int i = 0; i < m; ++i) {
          double wp = W(i, p), wq = W(i, q);
          W(i, p) = c * wp - s * wq;
          W(i, q) = s * wp + c * wq;
        }
        for (int i = 0; i < n; ++i) {
          double vp = V(i, p), vq = V(i, q);
          V(i, p) = c * vp - s * vq;
          V(i, q) = s * vp + c * vq;
        }
      }
    if (!rotated) break;
  }

  Eigen::VectorXd sig(n);
  for (int j = 0; j < n; ++j) sig(j) = W.col(j).norm();
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return sig(x) > sig(y); });

  Svd out;
  out.sigma.resize(n);
  out.U.resize(m, n);
  out.V.resize(n, n);
  const double floor = (n > 0 ? sig(order[0]) : 0.0) * 1e-300;
  for (int j = 0; j < n; ++j) {
    int c = order[static_cast<std::size_t>(j)];
    out.sigma(j) = sig(c);
    out.V.col(j) = V.col(c);
    if (sig(c) > floor && sig(c) > 0.0) {
      out.U.col(j) = W.col(c) / sig(c);
    } else {
      // complete the basis for null directions
      Eigen::VectorXd e = Eigen::VectorXd::Zero(m);
      for (int trial = 0; trial < m; ++trial) {
        e.setZero();
        e((j + trial) % m) = 1.0;
        reorthogonalize(e, out.U, j);
        if (e.norm() > 1e-6) break;
      }
      out.U.col(j) = e.normalized();
    }
  }
  if (flip) std::swap(out.U, out.V);
  return out;
}

Svd svd_truncated(const Eigen::MatrixXd& a, int r, double tol, std::uint64_t seed, double threshold) {
  const int mn = static_cast<int>(std::min(a.rows(), a.cols()));
  r = std::clamp(r, 0, mn);
  if (r == 0 || mn == 0) return {Eigen::MatrixXd(a.rows(), 0), Eigen::VectorXd(0), Eigen::MatrixXd(a.cols(), 0)};
  if (a.rows() >= a.cols()) return svd_tall(a, r, tol, seed, threshold);
  Svd t = svd_tall(a.transpose(), r, tol, seed, threshold);
  std::swap(t.U, t.V);
  return t;
}

}  // namespace avtse
