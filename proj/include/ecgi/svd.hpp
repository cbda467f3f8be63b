#pragma once

#include <Eigen/Dense>

namespace ecgi {

// Thin SVD A = U * diag(sigma) * V^T with sigma_1 >= ... >= sigma_r > 0.
// Numerically zero singular values are dropped, so r is the numerical rank.
struct SvdFactors {
  Eigen::MatrixXd u;        // rows(A) x r
  Eigen::VectorXd sigma;    // r
  Eigen::MatrixXd v;        // cols(A) x r

  int rank() const { return static_cast<int>(sigma.size()); }
  double condition_number() const { return sigma[0] / sigma[rank() - 1]; }
  Eigen::MatrixXd reconstruct() const { return u * sigma.asDiagonal() * v.transpose(); }
};

struct JacobiOptions {
  int max_sweeps = 60;
  double tol = 1e-14;  // relative off-diagonal threshold
};

// One-sided Jacobi SVD: plane rotations orthogonalize the column set, the
// surviving column norms are the singular values. Wide inputs are factored
// through their transpose.
SvdFactors jacobi_svd(const Eigen::MatrixXd& a, const JacobiOptions& opts = {});

}  // namespace ecgi
