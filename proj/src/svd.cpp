#include "ecgi/svd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "ecgi/errors.hpp"

namespace ecgi {

namespace {

// Hestenes one-sided Jacobi on a tall (or square) matrix B: returns B's
// factors with B = U * diag(sigma) * V^T.
SvdFactors one_sided(Eigen::MatrixXd b, const JacobiOptions& opts) {
  const int n = static_cast<int>(b.cols());
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);

  double max_off = 0.0;
  bool converged = (n <= 1);
  for (int sweep = 0; sweep < opts.max_sweeps && !converged; ++sweep) {
    max_off = 0.0;
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double app = b.col(p).squaredNorm();
        const double aqq = b.col(q).squaredNorm();
        const double apq = b.col(p).dot(b.col(q));
        if (app == 0.0 || aqq == 0.0) continue;
        const double off = std::abs(apq) / std::sqrt(app * aqq);
        max_off = std::max(max_off, off);
        if (off <= opts.tol) continue;

        const double tau = (aqq - app) / (2.0 * apq);
        const double t = (tau >= 0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;

        Eigen::VectorXd bp = b.col(p);
        b.col(p) = c * bp - s * b.col(q);
        b.col(q) = s * bp + c * b.col(q);
        Eigen::VectorXd vp = v.col(p);
        v.col(p) = c * vp - s * v.col(q);
        v.col(q) = s * vp + c * v.col(q);
      }
    }
    converged = max_off <= opts.tol;
  }
  if (!converged) {
    throw NumericError("jacobi_svd: no convergence in " + std::to_string(opts.max_sweeps) +
                       " sweeps, off-diagonal residual " + std::to_string(max_off));
  }

  Eigen::VectorXd norms(n);
  for (int j = 0; j < n; ++j) norms[j] = b.col(j).norm();
  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int i, int j) { return norms[i] > norms[j]; });

  const double sigma_max = norms[order[0]];
  const double cutoff =
      sigma_max * std::max(b.rows(), b.cols()) * std::numeric_limits<double>::epsilon();
  int r = 0;
  while (r < n && norms[order[static_cast<size_t>(r)]] > cutoff) ++r;
  if (r == 0) {
    throw NumericError("jacobi_svd: matrix is numerically zero");
  }

  SvdFactors f;
  f.u.resize(b.rows(), r);
  f.sigma.resize(r);
  f.v.resize(n, r);
  for (int j = 0; j < r; ++j) {
    int src = order[static_cast<size_t>(j)];
    f.sigma[j] = norms[src];
    f.u.col(j) = b.col(src) / norms[src];
    f.v.col(j) = v.col(src);
  }
  return f;
}

}  // namespace

SvdFactors jacobi_svd(const Eigen::MatrixXd& a, const JacobiOptions& opts) {
  if (a.size() == 0) throw ContractError("jacobi_svd: empty matrix");
  if (!a.allFinite()) throw NumericError("jacobi_svd: non-finite input");
  if (a.rows() >= a.cols()) return one_sided(a, opts);
  SvdFactors f = one_sided(a.transpose(), opts);
  std::swap(f.u, f.v);
  return f;
}

}  // namespace ecgi
