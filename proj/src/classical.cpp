#include "ecgi/classical.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "ecgi/errors.hpp"

namespace ecgi {

Eigen::MatrixXd first_difference_operator(const Eigen::MatrixXd& positions, int k) {
  const int n = static_cast<int>(positions.rows());
  if (n < 2) throw ContractError("first_difference_operator: need at least 2 nodes");
  k = std::min(k, n - 1);

  std::set<std::pair<int, int>> edges;
  for (int i = 0; i < n; ++i) {
    // k nearest neighbors of node i, ties broken by index.
    std::vector<std::pair<double, int>> d;
    d.reserve(static_cast<size_t>(n) - 1);
    for (int j = 0; j < n; ++j) {
      if (j != i) d.push_back({(positions.row(i) - positions.row(j)).squaredNorm(), j});
    }
    std::sort(d.begin(), d.end());
    for (int m = 0; m < k; ++m) {
      int j = d[static_cast<size_t>(m)].second;
      edges.insert({std::min(i, j), std::max(i, j)});
    }
  }

  Eigen::MatrixXd gamma = Eigen::MatrixXd::Zero(static_cast<long>(edges.size()), n);
  int row = 0;
  for (const auto& [i, j] : edges) {
    gamma(row, i) = 1.0;
    gamma(row, j) = -1.0;
    ++row;
  }
  return gamma;
}

TikhonovSolver::TikhonovSolver(const Eigen::MatrixXd& a, double lambda,
                               const Eigen::MatrixXd* gamma)
    : a_(a) {
  if (lambda < 0.0 || !std::isfinite(lambda)) {
    throw ContractError("tikhonov: lambda must be finite and non-negative");
  }
  Eigen::MatrixXd normal = a.transpose() * a;
  if (gamma != nullptr) {
    if (gamma->cols() != a.cols()) {
      throw DimensionError("tikhonov: regularization operator has " +
                           std::to_string(gamma->cols()) + " columns, system has " +
                           std::to_string(a.cols()));
    }
    normal += lambda * lambda * gamma->transpose() * (*gamma);
  } else {
    normal.diagonal().array() += lambda * lambda;
  }
  llt_.compute(normal);
  if (llt_.info() != Eigen::Success) {
    throw RegularizationError(
        "tikhonov: normal matrix is not positive definite; increase lambda");
  }
}

Eigen::VectorXd TikhonovSolver::solve(const Eigen::VectorXd& y) const {
  if (y.size() != a_.rows()) {
    throw DimensionError("tikhonov: y has length " + std::to_string(y.size()) +
                         ", system has " + std::to_string(a_.rows()) + " rows");
  }
  return llt_.solve(a_.transpose() * y);
}

Eigen::VectorXd tikhonov_solve(const Eigen::MatrixXd& a, const Eigen::VectorXd& y, double lambda,
                               const Eigen::MatrixXd* gamma) {
  return TikhonovSolver(a, lambda, gamma).solve(y);
}

Eigen::VectorXd tsvd_solve(const SvdFactors& f, const Eigen::VectorXd& y, int k) {
  if (k < 1 || k > f.rank()) {
    throw ContractError("tsvd_solve: k=" + std::to_string(k) + " outside [1, " +
                        std::to_string(f.rank()) + "]");
  }
  Eigen::VectorXd x = Eigen::VectorXd::Zero(f.v.rows());
  for (int i = 0; i < k; ++i) {
    x += (f.u.col(i).dot(y) / f.sigma[i]) * f.v.col(i);
  }
  return x;
}

Eigen::VectorXd tsvd_solve(const Eigen::MatrixXd& a, const Eigen::VectorXd& y, int k) {
  return tsvd_solve(jacobi_svd(a), y, k);
}

EpicardialBeat solve_beat(const TransferOperator& op, const BodySurfaceRecord& rec,
                          const RegularizationConfig& cfg) {
  const Eigen::MatrixXd& y = rec.potentials;
  if (y.rows() != op.a.rows()) {
    throw DimensionError("solve_beat: record has " + std::to_string(y.rows()) +
                         " channels, operator has " + std::to_string(op.a.rows()));
  }

  EpicardialBeat est;
  est.heart_id = -1;
  est.pacing_site = 0;
  est.potentials.resize(op.a.cols(), y.cols());

  if (cfg.truncation_rank.has_value()) {
    SvdFactors f = jacobi_svd(op.a);
    for (int t = 0; t < y.cols(); ++t) {
      est.potentials.col(t) = tsvd_solve(f, y.col(t), *cfg.truncation_rank);
    }
    return est;
  }

  Eigen::MatrixXd gamma;
  const Eigen::MatrixXd* gptr = nullptr;
  if (cfg.op == RegularizationConfig::Operator::first_difference) {
    gamma = first_difference_operator(op.heart_positions);
    gptr = &gamma;
  }
  TikhonovSolver solver(op.a, cfg.lambda, gptr);
  for (int t = 0; t < y.cols(); ++t) {
    est.potentials.col(t) = solver.solve(y.col(t));
  }
  return est;
}

double reconstruction_mse(const TransferOperator& op, const std::vector<BeatPair>& pairs,
                          const RegularizationConfig& cfg) {
  if (pairs.empty()) throw ContractError("reconstruction_mse: no pairs");
  double sq = 0.0;
  long count = 0;
  for (const BeatPair& p : pairs) {
    EpicardialBeat est = solve_beat(op, p.y, cfg);
    sq += (est.potentials - p.x.potentials).array().square().sum();
    count += p.x.potentials.size();
  }
  return sq / static_cast<double>(count);
}

double select_lambda(const TransferOperator& op, const std::vector<BeatPair>& pairs,
                     const RegularizationConfig& base, const std::vector<double>& grid) {
  if (grid.empty()) throw ContractError("select_lambda: empty grid");
  double best_lambda = grid.front();
  double best_mse = std::numeric_limits<double>::infinity();
  for (double lambda : grid) {
    RegularizationConfig cfg = base;
    cfg.lambda = lambda;
    double mse = reconstruction_mse(op, pairs, cfg);
    if (mse < best_mse) {
      best_mse = mse;
      best_lambda = lambda;
    }
  }
  return best_lambda;
}

int select_rank(const TransferOperator& op, const std::vector<BeatPair>& pairs) {
  SvdFactors f = jacobi_svd(op.a);
  int best_k = 1;
  double best_mse = std::numeric_limits<double>::infinity();
  for (int k = 1; k <= f.rank(); ++k) {
    RegularizationConfig cfg;
    cfg.truncation_rank = k;
    double mse = reconstruction_mse(op, pairs, cfg);
    if (mse < best_mse) {
      best_mse = mse;
      best_k = k;
    }
  }
  return best_k;
}

}  // namespace ecgi
