#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "ecgi/forward_sim.hpp"
#include "ecgi/svd.hpp"

namespace ecgi {

// Regularized inversion setup. When truncation_rank is set the solver is
// TSVD; otherwise Tikhonov with the chosen operator.
struct RegularizationConfig {
  enum class Operator { identity, first_difference };
  double lambda = 0.0;
  Operator op = Operator::identity;
  std::optional<int> truncation_rank;
};

// Edge-difference operator of the k-nearest-neighbor graph over node
// positions: one +1/-1 row per undirected edge.
Eigen::MatrixXd first_difference_operator(const Eigen::MatrixXd& positions, int k = 4);

// Shared Cholesky factorization of (A^T A + lambda^2 G^T G), reused across
// the time samples of a beat.
class TikhonovSolver {
 public:
  TikhonovSolver(const Eigen::MatrixXd& a, double lambda, const Eigen::MatrixXd* gamma = nullptr);
  Eigen::VectorXd solve(const Eigen::VectorXd& y) const;

 private:
  Eigen::MatrixXd a_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

// Minimizer of ||y - A x||^2 + lambda^2 ||G x||^2 via the normal equations.
Eigen::VectorXd tikhonov_solve(const Eigen::MatrixXd& a, const Eigen::VectorXd& y, double lambda,
                               const Eigen::MatrixXd* gamma = nullptr);

// Truncated-SVD solution from precomputed factors: the first k spectral
// components of the pseudoinverse. 1 <= k <= rank.
Eigen::VectorXd tsvd_solve(const SvdFactors& f, const Eigen::VectorXd& y, int k);
Eigen::VectorXd tsvd_solve(const Eigen::MatrixXd& a, const Eigen::VectorXd& y, int k);

// Column-by-column inversion of a body-surface record; one factorization
// shared by all T time samples.
EpicardialBeat solve_beat(const TransferOperator& op, const BodySurfaceRecord& rec,
                          const RegularizationConfig& cfg);

// Mean squared reconstruction error of a solver configuration over pairs.
double reconstruction_mse(const TransferOperator& op, const std::vector<BeatPair>& pairs,
                          const RegularizationConfig& cfg);

// Grid search for lambda (Tikhonov) on validation pairs; returns the best
// lambda by reconstruction MSE. Ties break toward the smaller lambda.
double select_lambda(const TransferOperator& op, const std::vector<BeatPair>& pairs,
                     const RegularizationConfig& base, const std::vector<double>& grid);

// Grid search for the TSVD truncation rank on validation pairs.
int select_rank(const TransferOperator& op, const std::vector<BeatPair>& pairs);

}  // namespace ecgi
