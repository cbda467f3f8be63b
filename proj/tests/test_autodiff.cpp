#include <doctest.h>

#include <cmath>

#include "ecgi/tensor.hpp"
#include "test_util.hpp"

using namespace ecgi;
using ecgi::testing::check_gradients;

namespace {

Tensor param(const Shape& shape, Rng& rng) {
  Tensor t = Tensor::randn(shape, rng);
  t.set_requires_grad(true);
  return t;
}

}  // namespace

TEST_CASE("gradient of sum(x*x) is 2x") {
  Tensor x = Tensor::from_vector({3.0, -1.0}).set_requires_grad(true);
  Tape tape;
  Tensor loss = sum(mul(x, x));
  tape.backward(loss);
  CHECK(x.grad().data()[0] == doctest::Approx(6.0).epsilon(1e-12));
  CHECK(x.grad().data()[1] == doctest::Approx(-2.0).epsilon(1e-12));
}

TEST_CASE("gradient of 0.5*||x||^2 is x") {
  Tensor x = Tensor::from_vector({1.0, 2.0, 3.0}).set_requires_grad(true);
  Tape tape;
  Tensor loss = scale(sum(mul(x, x)), 0.5);
  tape.backward(loss);
  for (int i = 0; i < 3; ++i) CHECK(x.grad().data()[i] == doctest::Approx(x.data()[i]).epsilon(1e-12));
}

TEST_CASE("constant loss yields all-zero gradients") {
  Tensor x = Tensor::from_vector({1.0, 2.0}).set_requires_grad(true);
  Tape tape;
  Tensor unused = mul(x, x);  // recorded, but not the loss
  Tensor loss = Tensor::scalar(3.0);
  tape.backward(loss);
  CHECK(x.grad().data().abs().maxCoeff() == 0.0);
}

TEST_CASE("non-scalar loss is a contract error") {
  Tensor x = Tensor::from_vector({1.0, 2.0}).set_requires_grad(true);
  Tape tape;
  Tensor y = mul(x, x);
  CHECK_THROWS_AS(tape.backward(y), ContractError);
}

TEST_CASE("detached parameter gets zero gradient, not an error") {
  Tensor used = Tensor::from_vector({2.0}).set_requires_grad(true);
  Tensor detached = Tensor::from_vector({5.0}).set_requires_grad(true);
  Tape tape;
  Tensor loss = sum(mul(used, used));
  tape.backward(loss);
  CHECK(detached.grad().data()[0] == 0.0);
  CHECK(used.grad().data()[0] == doctest::Approx(4.0));
}

TEST_CASE("tapes do not nest and are consumed by backward") {
  Tape tape;
  CHECK_THROWS_AS(Tape{}, ContractError);
  Tensor x = Tensor::from_vector({1.0}).set_requires_grad(true);
  Tensor loss = sum(mul(x, x));
  tape.backward(loss);
  CHECK_THROWS_AS(tape.backward(loss), ContractError);
}

TEST_CASE("finite differences validate every operation family") {
  Rng rng(11);

  SUBCASE("add/sub/scale") {
    Tensor a = param({3, 4}, rng), b = param({3, 4}, rng);
    check_gradients({a, b}, [&] { return sum(mul(scale(add(a, b), 1.7), sub(a, b))); });
  }
  SUBCASE("mul") {
    Tensor a = param({3, 4}, rng), b = param({3, 4}, rng);
    check_gradients({a, b}, [&] { return sum(mul(a, b)); });
  }
  SUBCASE("matmul") {
    Tensor a = param({3, 4}, rng), b = param({4, 2}, rng);
    check_gradients({a, b}, [&] { return sum(mul(matmul(a, b), matmul(a, b))); });
  }
  SUBCASE("transpose and reshape") {
    Tensor a = param({3, 4}, rng);
    check_gradients({a}, [&] { return sum(mul(transpose(a), transpose(a))); });
    check_gradients({a}, [&] { return sum(mul(reshape(a, {4, 3}), reshape(a, {4, 3}))); });
  }
  SUBCASE("concat") {
    Tensor a = param({2, 3}, rng), b = param({2, 3}, rng);
    check_gradients({a, b}, [&] {
      Tensor c = concat({a, b}, 0);
      return sum(mul(c, c));
    });
    check_gradients({a, b}, [&] {
      Tensor c = concat({a, b}, 1);
      return sum(mul(c, c));
    });
  }
  SUBCASE("mean and sum reductions") {
    Tensor a = param({4, 4}, rng);
    check_gradients({a}, [&] { return mean(mul(a, a)); });
    check_gradients({a}, [&] { return sum(gelu(a)); });
  }
  SUBCASE("relu") {
    // Keep coordinates away from the kink.
    Tensor a = param({3, 4}, rng);
    for (long i = 0; i < a.size(); ++i) {
      if (std::abs(a.data()[i]) < 0.05) a.mutable_data()[i] = 0.2;
    }
    check_gradients({a}, [&] { return sum(mul(relu(a), relu(a))); });
  }
  SUBCASE("gelu sigmoid tanh") {
    Tensor a = param({3, 4}, rng);
    check_gradients({a}, [&] { return sum(mul(gelu(a), sigmoid(a))); });
    check_gradients({a}, [&] { return sum(mul(ecgi::tanh(a), ecgi::tanh(a))); });
  }
  SUBCASE("softmax both axes") {
    Tensor a = param({3, 5}, rng);
    Tensor w = Tensor::randn({3, 5}, rng);
    check_gradients({a}, [&] { return sum(mul(softmax(a, 1), w)); });
    check_gradients({a}, [&] { return sum(mul(softmax(a, 0), w)); });
  }
  SUBCASE("layer_norm both axes") {
    Tensor a = param({3, 6}, rng);
    Tensor w = Tensor::randn({3, 6}, rng);
    check_gradients({a}, [&] { return sum(mul(layer_norm(a, 1), w)); });
    check_gradients({a}, [&] { return sum(mul(layer_norm(a, 0), w)); });
  }
  SUBCASE("broadcast helpers") {
    Tensor x = param({3, 4}, rng);
    Tensor brow = param({4}, rng), bcol = param({3}, rng);
    check_gradients({x, brow, bcol}, [&] {
      return sum(mul(add_col(mul_row(add_row(x, brow), brow), bcol), x));
    });
  }
  SUBCASE("im2col1d") {
    Tensor x = param({2, 6}, rng);
    Tensor w = Tensor::randn({3, 6}, rng);
    check_gradients({x}, [&] {
      Tensor cols = im2col1d(x, 3);  // 6 x 6
      return sum(mul(matmul(w, cols), matmul(w, cols)));
    });
  }
}

TEST_CASE("two-layer network gradients match finite differences") {
  Rng rng(23);
  Tensor x = Tensor::randn({5, 3}, rng);
  Tensor target = Tensor::randn({5, 2}, rng);
  Tensor w1 = param({3, 8}, rng), b1 = param({8}, rng);
  Tensor w2 = param({8, 2}, rng), b2 = param({2}, rng);

  auto forward = [&] {
    Tensor h = gelu(add_row(matmul(x, w1), b1));
    Tensor out = add_row(matmul(h, w2), b2);
    Tensor d = sub(out, target);
    return mean(mul(d, d));
  };
  check_gradients({w1, b1, w2, b2}, forward);
}

TEST_CASE("backward is linear in the loss") {
  Rng rng(31);
  Tensor x = param({4, 4}, rng);
  auto f = [&] { return sum(mul(x, x)); };
  auto g = [&] { return mean(gelu(x)); };

  Arr gf, gg, gcombo;
  {
    Tape t;
    Tensor loss = f();
    t.backward(loss);
    gf = x.grad().data();
  }
  {
    Tape t;
    Tensor loss = g();
    t.backward(loss);
    gg = x.grad().data();
  }
  const double a = 2.25, b = -0.75;
  {
    Tape t;
    Tensor loss = add(scale(f(), a), scale(g(), b));
    t.backward(loss);
    gcombo = x.grad().data();
  }
  Arr expect = a * gf + b * gg;
  CHECK((gcombo - expect).abs().maxCoeff() < 1e-12);
}

TEST_CASE("identical seeds give bit-identical outputs and gradients") {
  auto run = [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor x = Tensor::randn({4, 6}, rng);
    Tensor w = Tensor::randn({6, 3}, rng).set_requires_grad(true);
    Tape tape;
    Tensor loss = mean(mul(matmul(x, w), matmul(x, w)));
    tape.backward(loss);
    return std::make_pair(loss.value(), Arr(w.grad().data()));
  };
  auto [l1, g1] = run(99);
  auto [l2, g2] = run(99);
  CHECK(l1 == l2);
  for (long i = 0; i < g1.size(); ++i) CHECK(g1[i] == g2[i]);
}

TEST_CASE("ops run without a tape and record nothing") {
  Tensor x = Tensor::from_vector({1.0, 2.0}).set_requires_grad(true);
  Tensor y = mul(x, x);  // no active tape
  CHECK(y.data()[1] == 4.0);
  Tape tape;
  CHECK(tape.size() == 0);
}
