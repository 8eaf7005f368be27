#include <doctest.h>

#include <cmath>

#include "metavi/adam.hpp"
#include "metavi/mlp.hpp"
#include "metavi/rng.hpp"

using namespace metavi;

TEST_CASE("mlp parameter count matches dims") {
  Rng rng(1);
  Mlp net = Mlp::make({3, 5, 2}, Activation::relu, rng);
  CHECK(net.parameter_count() == 3 * 5 + 5 + 5 * 2 + 2);
  CHECK(net.input_dim() == 3);
  CHECK(net.output_dim() == 2);
}

TEST_CASE("mlp forward produces batched output and rejects bad input") {
  Rng rng(2);
  Mlp net = Mlp::make({4, 8, 3}, Activation::leaky_relu, rng);
  Tape tape;
  Tensor x = Tensor::zeros(6, 4);
  Tensor y = net.forward(tape, x);
  CHECK(y.rows() == 6);
  CHECK(y.cols() == 3);
  Tensor bad = Tensor::zeros(6, 5);
  CHECK_THROWS_AS(net.forward(tape, bad), ShapeError);
}

TEST_CASE("collect_parameters names every layer") {
  Rng rng(3);
  Mlp net = Mlp::make({2, 3, 1}, Activation::relu, rng);
  std::vector<std::pair<std::string, Tensor>> params;
  net.collect_parameters("enc", params);
  REQUIRE(params.size() == 4);
  CHECK(params[0].first == "enc.w0");
  CHECK(params[1].first == "enc.b0");
  CHECK(params[2].first == "enc.w1");
  CHECK(params[3].first == "enc.b1");
}

TEST_CASE("adam first step matches the closed form") {
  // With m, v bias-corrected, the first update is lr * g / (|g| + eps).
  Tensor theta = Tensor::scalar(1.0);
  theta.set_requires_grad(true);
  AdamConfig cfg;
  cfg.lr = 0.05;
  Adam opt({{"theta", theta}}, cfg);
  theta.grad()[0] = 0.73;
  opt.step();
  double expected = 1.0 - cfg.lr * 0.73 / (std::fabs(0.73) + cfg.eps);
  CHECK(theta.data()[0] == doctest::Approx(expected).epsilon(1e-12));
  CHECK(opt.t() == 1);
}

TEST_CASE("adam converges on a quadratic") {
  Tensor theta = Tensor::scalar(-4.0);
  theta.set_requires_grad(true);
  AdamConfig cfg;
  cfg.lr = 0.05;
  Adam opt({{"theta", theta}}, cfg);
  for (int i = 0; i < 3000; ++i) {
    opt.zero_grad();
    theta.grad()[0] = 2.0 * (theta.data()[0] - 3.0);
    opt.step();
  }
  CHECK(theta.data()[0] == doctest::Approx(3.0).epsilon(1e-3));
}

TEST_CASE("adam rejects non-finite gradients by name") {
  Tensor theta = Tensor::scalar(0.0);
  theta.set_requires_grad(true);
  Adam opt({{"theta", theta}}, AdamConfig{});
  theta.grad()[0] = std::nan("");
  CHECK_THROWS_WITH_AS(opt.step(), doctest::Contains("theta"), NumericError);
}

TEST_CASE("adam state roundtrips through serialize/restore") {
  auto make_pair = [] {
    Tensor t = Tensor::from({0.5, -1.5}, 1, 2);
    t.set_requires_grad(true);
    return t;
  };
  Tensor a = make_pair(), b = make_pair();
  AdamConfig cfg;
  cfg.lr = 0.01;
  Adam opt_a({{"p", a}}, cfg);
  for (int i = 0; i < 10; ++i) {
    opt_a.zero_grad();
    a.grad()[0] = a.data()[0];
    a.grad()[1] = a.data()[1];
    opt_a.step();
  }

  Adam opt_b({{"p", b}}, cfg);
  b.data() = a.data();
  opt_b.restore_state(opt_a.serialize_state(), opt_a.t());

  for (int i = 0; i < 5; ++i) {
    for (Adam* o : {&opt_a, &opt_b}) o->zero_grad();
    a.grad()[0] = a.data()[0];
    a.grad()[1] = a.data()[1];
    b.grad()[0] = b.data()[0];
    b.grad()[1] = b.data()[1];
    opt_a.step();
    opt_b.step();
  }
  CHECK(a.data()[0] == b.data()[0]);
  CHECK(a.data()[1] == b.data()[1]);
}
