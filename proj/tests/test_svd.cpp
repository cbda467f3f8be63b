#include <doctest.h>

#include <Eigen/Dense>

#include "ecgi/errors.hpp"
#include "ecgi/rng.hpp"
#include "ecgi/svd.hpp"

using namespace ecgi;

namespace {

Eigen::MatrixXd random_matrix(int r, int c, Rng& rng) {
  Eigen::MatrixXd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rng.normal();
  return m;
}

void check_factors(const Eigen::MatrixXd& a, const SvdFactors& f, double tol = 1e-8) {
  const int r = f.rank();
  Eigen::MatrixXd utu = f.u.transpose() * f.u;
  Eigen::MatrixXd vtv = f.v.transpose() * f.v;
  CHECK((utu - Eigen::MatrixXd::Identity(r, r)).norm() < tol);
  CHECK((vtv - Eigen::MatrixXd::Identity(r, r)).norm() < tol);
  CHECK((f.reconstruct() - a).norm() / a.norm() < tol);
  for (int i = 1; i < r; ++i) CHECK(f.sigma[i - 1] >= f.sigma[i]);
  CHECK(f.sigma[r - 1] > 0.0);
}

}  // namespace

TEST_CASE("diagonal matrix has its diagonal as singular values") {
  Eigen::MatrixXd d = Eigen::Vector3d(3.0, 2.0, 1.0).asDiagonal();
  SvdFactors f = jacobi_svd(d);
  REQUIRE(f.rank() == 3);
  CHECK(f.sigma[0] == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(f.sigma[1] == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(f.sigma[2] == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("rank-1 outer product has a single singular value |u||v|") {
  Rng rng(7);
  Eigen::VectorXd u = random_matrix(5, 1, rng);
  Eigen::VectorXd v = random_matrix(4, 1, rng);
  Eigen::MatrixXd a = u * v.transpose();
  SvdFactors f = jacobi_svd(a);
  REQUIRE(f.rank() == 1);
  CHECK(f.sigma[0] == doctest::Approx(u.norm() * v.norm()).epsilon(1e-12));
}

TEST_CASE("random 12x24 reconstruction residual below 1e-10") {
  Rng rng(13);
  Eigen::MatrixXd a = random_matrix(12, 24, rng);
  SvdFactors f = jacobi_svd(a);
  CHECK((f.reconstruct() - a).norm() / a.norm() < 1e-10);
  check_factors(a, f);
}

TEST_CASE("factors satisfy orthonormality on tall, square and wide inputs") {
  Rng rng(17);
  for (auto [r, c] : {std::pair{9, 4}, {6, 6}, {4, 9}}) {
    Eigen::MatrixXd a = random_matrix(r, c, rng);
    check_factors(a, jacobi_svd(a));
  }
}

TEST_CASE("numerically rank-deficient input drops the null direction") {
  Rng rng(19);
  Eigen::MatrixXd a = random_matrix(6, 3, rng);
  a.col(2) = a.col(0) + a.col(1);  // exact linear dependence
  SvdFactors f = jacobi_svd(a);
  CHECK(f.rank() == 2);
  CHECK((f.reconstruct() - a).norm() / a.norm() < 1e-12);
}

TEST_CASE("invalid inputs are rejected") {
  Eigen::MatrixXd empty;
  CHECK_THROWS_AS(jacobi_svd(empty), ContractError);
  Eigen::MatrixXd nan1 = Eigen::MatrixXd::Constant(2, 2, std::nan(""));
  CHECK_THROWS_AS(jacobi_svd(nan1), NumericError);
  Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(3, 3);
  CHECK_THROWS_AS(jacobi_svd(zero), NumericError);
}
