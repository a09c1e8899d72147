#pragma once

#include <Eigen/Core>
#include <cstdint>

namespace avtse {

struct Svd {
  Eigen::MatrixXd U;      // m x r
  Eigen::VectorXd sigma;  // descending
  Eigen::MatrixXd V;      // n x r
};

// One-sided Jacobi on a small dense matrix; full thin decomposition.
Svd jacobi_svd(const Eigen::MatrixXd& a);

// Top-r singular triplets by Golub-Kahan-Lanczos bidiagonalization with full
// reorthogonalization. Steps are added until every kept triplet satisfies
// ||A^T u - sigma v|| <= tol * sigma_1. Triplets whose value is provably
// below `threshold` are exempt from the test.
Svd svd_truncated(const Eigen::MatrixXd& a, int r, double tol = 1e-12, std::uint64_t seed = 0x5eed,
                  double threshold = 0.0);

}  // namespace avtse
