#include <doctest.h>

#include <cmath>

#include "ecgi/errors.hpp"
#include "ecgi/metrics.hpp"
#include "ecgi/rng.hpp"

using namespace ecgi;

namespace {

Eigen::MatrixXd random_signal(int rows, int cols, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("identical signals have CC 1, negated signals CC -1") {
  Rng rng(3);
  Eigen::MatrixXd x = random_signal(5, 20, rng);
  CcResult same = temporal_cc(x, x);
  CHECK(same.n_valid == 5);
  for (double cc : same.per_electrode) CHECK(cc == doctest::Approx(1.0).epsilon(1e-12));

  CcResult neg = temporal_cc(-x, x);
  for (double cc : neg.per_electrode) CHECK(cc == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("Pearson CC is affine invariant: 2x + 7 has CC 1") {
  Rng rng(5);
  Eigen::MatrixXd x = random_signal(4, 16, rng);
  Eigen::MatrixXd scaled = (2.0 * x.array() + 7.0).matrix();
  CcResult r = temporal_cc(scaled, x);
  for (double cc : r.per_electrode) CHECK(cc == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("affine invariance property over 1000 random cases") {
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    Eigen::MatrixXd x = random_signal(2, 12, rng);
    Eigen::MatrixXd p = random_signal(2, 12, rng);
    double a = std::exp(rng.normal());  // positive scale
    double b = 3.0 * rng.normal();
    double c = std::exp(rng.normal());
    double d = 3.0 * rng.normal();
    CcResult base = temporal_cc(p, x);
    CcResult mapped = temporal_cc((a * p.array() + b).matrix(), (c * x.array() + d).matrix());
    for (int e = 0; e < 2; ++e) {
      CHECK(mapped.per_electrode[e] == doctest::Approx(base.per_electrode[e]).epsilon(1e-9));
    }
  }
}

TEST_CASE("zero-variance truth electrodes are excluded and counted") {
  Rng rng(9);
  Eigen::MatrixXd x = random_signal(4, 10, rng);
  x.row(1).setConstant(3.25);
  Eigen::MatrixXd p = random_signal(4, 10, rng);
  CcResult r = temporal_cc(p, x);
  CHECK(r.excluded_truth == 1);
  CHECK(r.n_valid == 3);
  CHECK(std::isnan(r.per_electrode[1]));
}

TEST_CASE("zero-variance predictions are scored 0 and counted") {
  Rng rng(11);
  Eigen::MatrixXd x = random_signal(3, 10, rng);
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(3, 10);
  CcResult r = temporal_cc(p, x);
  CHECK(r.degenerate_pred == 3);
  CHECK(r.n_valid == 3);
  CHECK(r.mean == 0.0);
}

TEST_CASE("all-degenerate truth is an undefined-metric error") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Constant(3, 10, 1.5);
  Eigen::MatrixXd p = Eigen::MatrixXd::Random(3, 10);
  CHECK_THROWS_AS(temporal_cc(p, x), UndefinedMetricError);
}

TEST_CASE("temporal_cc contract errors") {
  Eigen::MatrixXd a(2, 4), b(2, 5);
  a.setRandom();
  b.setRandom();
  CHECK_THROWS_AS(temporal_cc(a, b), DimensionError);
  Eigen::MatrixXd one(2, 1);
  one.setRandom();
  CHECK_THROWS_AS(temporal_cc(one, one), ContractError);
}

TEST_CASE("mse and mae on simple displacements") {
  Rng rng(13);
  Eigen::MatrixXd x = random_signal(4, 8, rng);

  auto [mse0, mae0] = mse_mae(x, x);
  CHECK(mse0 == 0.0);
  CHECK(mae0 == 0.0);

  Eigen::MatrixXd plus1 = (x.array() + 1.0).matrix();
  auto [mse1, mae1] = mse_mae(plus1, x);
  CHECK(mse1 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(mae1 == doctest::Approx(1.0).epsilon(1e-12));

  // Random +-2 per entry: mse 4, mae 2.
  Eigen::MatrixXd pm = x;
  for (int i = 0; i < pm.rows(); ++i)
    for (int j = 0; j < pm.cols(); ++j) pm(i, j) += rng.uniform() < 0.5 ? 2.0 : -2.0;
  auto [mse2, mae2] = mse_mae(pm, x);
  CHECK(mse2 == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(mae2 == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("translation covariance of mse/mae over 1000 random cases") {
  Rng rng(17);
  for (int i = 0; i < 1000; ++i) {
    Eigen::MatrixXd x = random_signal(2, 6, rng);
    Eigen::MatrixXd p = random_signal(2, 6, rng);
    double c = 2.0 * rng.normal();
    auto [mse_a, mae_a] = mse_mae(p, x);
    auto [mse_b, mae_b] = mse_mae((p.array() + c).matrix(), (x.array() + c).matrix());
    CHECK(mse_b == doctest::Approx(mse_a).epsilon(1e-9));
    CHECK(mae_b == doctest::Approx(mae_a).epsilon(1e-9));
  }
}

TEST_CASE("adding noise to a prediction never raises expected CC") {
  // Paired Monte Carlo: the same base normals scaled by increasing sigma.
  Rng rng(19);
  Eigen::MatrixXd x = random_signal(1, 64, rng);
  Eigen::MatrixXd p = x;  // start from the perfect prediction
  const int trials = 400;
  std::vector<double> sigmas = {0.1, 0.5, 2.0};
  std::vector<double> means, ses;
  for (double sigma : sigmas) {
    Rng noise(777);  // paired draws across sigma levels
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < trials; ++i) {
      Eigen::MatrixXd z = random_signal(1, 64, noise);
      double cc = temporal_cc(p + sigma * z, x).mean;
      sum += cc;
      sq += cc * cc;
    }
    double m = sum / trials;
    means.push_back(m);
    ses.push_back(std::sqrt((sq / trials - m * m) / trials));
  }
  for (size_t i = 1; i < sigmas.size(); ++i) {
    CHECK(means[i] <= means[i - 1] + 3.0 * (ses[i] + ses[i - 1]));
  }
}

TEST_CASE("accumulator pools cc over electrode-beat pairs and entries") {
  Rng rng(23);
  MetricsAccumulator acc;
  Eigen::MatrixXd x1 = random_signal(3, 12, rng);
  Eigen::MatrixXd x2 = random_signal(3, 12, rng);
  acc.add(0, 0, x1, x1);                          // perfect beat
  acc.add(1, 1, Eigen::MatrixXd::Zero(3, 12), x2);  // zero prediction
  MetricsReport r;
  acc.fill(r);
  CHECK(r.n_beats == 2);
  CHECK(r.n_cc_pairs == 6);
  CHECK(r.temporal_cc == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(r.cc_degenerate_pred == 3);
  auto [mse2, mae2] = mse_mae(Eigen::MatrixXd::Zero(3, 12), x2);
  CHECK(r.mse == doctest::Approx(mse2 / 2.0).epsilon(1e-12));
}

TEST_CASE("csv rows are stable and round-trippable") {
  MetricsReport r;
  r.method = "demo";
  r.temporal_cc = 1.0 / 3.0;
  r.mse = 0.125;
  r.mae = 0.25;
  r.param_count = 42;
  std::string row1 = report_csv_row(r);
  std::string row2 = report_csv_row(r);
  CHECK(row1 == row2);
  CHECK(row1.substr(0, 5) == "demo,");
  CHECK(report_csv_header().find("temporal_cc") != std::string::npos);
  // %.17g round-trips doubles exactly.
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}
