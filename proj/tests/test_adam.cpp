#include <doctest.h>

#include <cmath>

#include "ecgi/adam.hpp"

using namespace ecgi;

TEST_CASE("first step moves by exactly lr in magnitude") {
  for (double g0 : {0.3, -4.0, 17.5}) {
    std::vector<Param> params{{"w", Tensor::from_vector({1.0})}};
    AdamConfig cfg;
    cfg.lr = 3e-4;
    AdamState state(params, cfg);
    std::vector<Arr> grads{Arr::Constant(1, g0)};
    adam_step(params, grads, state);
    double delta = params[0].value.data()[0] - 1.0;
    // Bias-corrected step 1: update = lr * g / (|g| + eps) ~ lr * sign(g).
    CHECK(std::abs(delta) == doctest::Approx(cfg.lr).epsilon(1e-6));
    CHECK(std::signbit(delta) == !std::signbit(g0));
    CHECK(state.step_count() == 1);
  }
}

TEST_CASE("zero gradient leaves parameters unchanged while moments decay") {
  std::vector<Param> params{{"w", Tensor::from_vector({2.0, -3.0})}};
  AdamState state(params, {});
  std::vector<Arr> g1{Arr::Constant(2, 1.0)};
  adam_step(params, g1, state);
  Arr m_after_first = state.first_moment(0);
  Arr w_after_first = params[0].value.data();

  std::vector<Arr> g0{Arr::Zero(2)};
  adam_step(params, g0, state);
  CHECK((params[0].value.data() - w_after_first).abs().maxCoeff() > 0.0);  // bias-corrected m != 0

  // With zero gradients forever, moments decay geometrically.
  CHECK(state.first_moment(0)[0] == doctest::Approx(0.9 * m_after_first[0]).epsilon(1e-12));

  std::vector<Param> fresh{{"w", Tensor::from_vector({2.0})}};
  AdamState fs(fresh, {});
  adam_step(fresh, {Arr::Zero(1)}, fs);
  CHECK(fresh[0].value.data()[0] == 2.0);  // zero gradient from the start: no motion
}

TEST_CASE("200 steps on (w-5)^2 with lr 0.1 converge near 5") {
  std::vector<Param> params{{"w", Tensor::from_vector({0.0})}};
  AdamConfig cfg;
  cfg.lr = 0.1;
  AdamState state(params, cfg);
  for (int i = 0; i < 200; ++i) {
    double w = params[0].value.data()[0];
    std::vector<Arr> grads{Arr::Constant(1, 2.0 * (w - 5.0))};
    adam_step(params, grads, state);
  }
  CHECK(std::abs(params[0].value.data()[0] - 5.0) < 0.05);
  CHECK(state.step_count() == 200);
}

TEST_CASE("shape mismatch raises DimensionError") {
  std::vector<Param> params{{"w", Tensor::from_vector({1.0, 2.0})}};
  AdamState state(params, {});
  std::vector<Arr> bad{Arr::Zero(3)};
  CHECK_THROWS_AS(adam_step(params, bad, state), DimensionError);
}
