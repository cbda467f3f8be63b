#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "ecgi/diffusion.hpp"

using namespace ecgi;

namespace {

NoiseSchedule default_schedule() { return build_schedule(DiffusionConfig{}); }

}  // namespace

TEST_CASE("a denoiser that returns the injected noise has zero loss") {
  NoiseSchedule s = default_schedule();
  Rng rng(3);
  Tensor x0 = Tensor::randn({4, 8}, rng);
  Tensor y = Tensor::randn({2, 8}, rng);

  NoiseDraw draw = draw_noise(x0.shape(), s, rng);
  DenoiserFn oracle = [&](const Tensor&, int, const Tensor&) { return draw.eps; };
  Tensor loss = train_loss_with_draw(x0, y, oracle, s, draw);
  CHECK(loss.value() == 0.0);
}

TEST_CASE("a zero denoiser has unit expected loss") {
  NoiseSchedule s = default_schedule();
  Rng rng(5);
  Tensor x0 = Tensor::zeros({1, 1});
  Tensor y = Tensor::zeros({1, 1});
  DenoiserFn zero = [](const Tensor& x_t, int, const Tensor&) {
    return Tensor::zeros(x_t.shape());
  };
  const int n = 10000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    double v = train_loss(x0, y, zero, s, rng).value();
    sum += v;
    sq += v * v;
  }
  double mean = sum / n;
  double se = std::sqrt((sq / n - mean * mean) / n);
  CHECK(std::abs(mean - 1.0) < 3.0 * se);
}

TEST_CASE("the loss is never negative") {
  NoiseSchedule s = default_schedule();
  Rng rng(7);
  Tensor x0 = Tensor::randn({3, 5}, rng);
  Tensor y = Tensor::randn({2, 5}, rng);
  DenoiserFn noisy = [&](const Tensor& x_t, int, const Tensor&) {
    Rng r(11);
    return Tensor::randn(x_t.shape(), r);
  };
  for (int i = 0; i < 50; ++i) {
    CHECK(train_loss(x0, y, noisy, s, rng).value() >= 0.0);
  }
}

TEST_CASE("a denoiser with the wrong output shape is rejected") {
  NoiseSchedule s = default_schedule();
  Rng rng(9);
  Tensor x0 = Tensor::randn({3, 5}, rng);
  Tensor y = Tensor::randn({2, 5}, rng);
  DenoiserFn bad = [](const Tensor&, int, const Tensor&) { return Tensor::zeros({1, 5}); };
  CHECK_THROWS_AS(train_loss(x0, y, bad, s, rng), DimensionError);
}

TEST_CASE("K=1 returns the single sample as its own mean") {
  NoiseSchedule s = default_schedule();
  Rng rng(13);
  Tensor y = Tensor::randn({2, 6}, rng);
  DenoiserFn zero = [](const Tensor& x_t, int, const Tensor&) {
    return Tensor::zeros(x_t.shape());
  };
  PosteriorSample ps = sample_posterior(y, zero, s, 4, 1, Rng(21));
  REQUIRE(ps.samples.size() == 1);
  CHECK((ps.samples[0].data() - ps.mean.data()).abs().maxCoeff() == 0.0);
  CHECK(ps.mean.rows() == 4);
  CHECK(ps.mean.cols() == 6);
}

TEST_CASE("fixed seeds give bit-identical posterior samples") {
  NoiseSchedule s = default_schedule();
  Rng rng(17);
  Tensor y = Tensor::randn({2, 6}, rng);
  DenoiserFn damp = [](const Tensor& x_t, int, const Tensor&) {
    return Tensor(x_t.shape(), x_t.data() * 0.1);
  };
  PosteriorSample a = sample_posterior(y, damp, s, 3, 4, Rng(33));
  PosteriorSample b = sample_posterior(y, damp, s, 3, 4, Rng(33));
  for (size_t k = 0; k < a.samples.size(); ++k) {
    CHECK((a.samples[k].data() - b.samples[k].data()).abs().maxCoeff() == 0.0);
  }
  PosteriorSample c = sample_posterior(y, damp, s, 3, 4, Rng(34));
  CHECK((a.samples[0].data() - c.samples[0].data()).abs().maxCoeff() > 0.0);
}

TEST_CASE("every reverse step of one chain sees the same conditioning signal") {
  NoiseSchedule s = default_schedule();
  Rng rng(19);
  Tensor y = Tensor::randn({2, 4}, rng);
  std::vector<const detail::TensorImpl*> seen;
  std::vector<Arr> values;
  DenoiserFn hook = [&](const Tensor& x_t, int, const Tensor& cond) {
    seen.push_back(cond.impl().get());
    values.push_back(cond.data());
    return Tensor::zeros(x_t.shape());
  };
  sample_posterior(y, hook, s, 3, 2, Rng(5));
  REQUIRE(seen.size() == static_cast<size_t>(2 * s.t_diff));
  for (const auto* p : seen) CHECK(p == y.impl().get());
  for (const Arr& v : values) CHECK((v - y.data()).abs().maxCoeff() == 0.0);
}

TEST_CASE("posterior sample spread across chains is finite and nonzero") {
  NoiseSchedule s = default_schedule();
  Rng rng(23);
  Tensor y = Tensor::randn({2, 5}, rng);
  DenoiserFn damp = [](const Tensor& x_t, int, const Tensor&) {
    return Tensor(x_t.shape(), x_t.data() * 0.2);
  };
  PosteriorSample ps = sample_posterior(y, damp, s, 3, 8, Rng(41));
  Arr sq = Arr::Zero(ps.mean.size());
  for (const Tensor& smp : ps.samples) sq += (smp.data() - ps.mean.data()).square();
  double sd = std::sqrt(sq.sum() / (8 * ps.mean.size()));
  CHECK(std::isfinite(sd));
  CHECK(sd > 0.0);
}

TEST_CASE("a diverging denoiser reports the failing step") {
  NoiseSchedule s = default_schedule();
  Rng rng(29);
  Tensor y = Tensor::randn({2, 4}, rng);
  DenoiserFn blowup = [](const Tensor& x_t, int t, const Tensor&) {
    if (t == 60) return Tensor::full(x_t.shape(), std::numeric_limits<double>::infinity());
    return Tensor::zeros(x_t.shape());
  };
  CHECK_THROWS_WITH_AS(sample_posterior(y, blowup, s, 3, 1, Rng(1)),
                       doctest::Contains("step 60"), SamplingError);
  CHECK_THROWS_AS(sample_posterior(y, blowup, s, 3, 0, Rng(1)), ContractError);
}
