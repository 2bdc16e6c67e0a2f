#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "mi/errors.hpp"
#include "mi/nn.hpp"
#include "mi/rng.hpp"
#include "support.hpp"

using mi::nn::Tensor;

namespace {

Tensor random_tensor(std::vector<int> shape, mi::Rng& rng, double scale = 0.5) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.v) v = scale * rng.normal();
  return t;
}

Tensor x2_dummy() {
  Tensor t = Tensor::zeros({1, 2, 2});
  t.v = {1.0, 2.0, 3.0, 4.0};
  return t;
}

}  // namespace

TEST_CASE("conv2d forward: hand-computed examples") {
  // 3x3 ones, single 1x1 kernel of value 2, zero bias -> all twos.
  Tensor x = Tensor::zeros({1, 3, 3});
  std::fill(x.v.begin(), x.v.end(), 1.0);
  mi::nn::Conv2dLayer k1;
  k1.kernels = Tensor::zeros({1, 1, 1, 1});
  k1.kernels.v[0] = 2.0;
  k1.bias = Tensor::zeros({1});
  const Tensor y1 = mi::nn::conv2d_forward(x, k1);
  REQUIRE(y1.shape == std::vector<int>{1, 3, 3});
  for (double v : y1.v) CHECK(v == doctest::Approx(2.0));

  // [[1,2],[3,4]] against a 2x2 ones kernel with bias 1 -> 11.
  Tensor x2 = Tensor::zeros({1, 2, 2});
  x2.v = {1.0, 2.0, 3.0, 4.0};
  mi::nn::Conv2dLayer k2;
  k2.kernels = Tensor::zeros({1, 1, 2, 2});
  std::fill(k2.kernels.v.begin(), k2.kernels.v.end(), 1.0);
  k2.bias = Tensor::zeros({1});
  k2.bias.v[0] = 1.0;
  const Tensor y2 = mi::nn::conv2d_forward(x2, k2);
  REQUIRE(y2.shape == std::vector<int>{1, 1, 1});
  CHECK(y2.v[0] == doctest::Approx(11.0));
}

TEST_CASE("conv2d forward: valid shapes and multi-channel accumulation") {
  mi::Rng rng(1);
  const Tensor x = random_tensor({1, 22, 22}, rng);
  mi::nn::Conv2dLayer layer;
  layer.kernels = random_tensor({128, 1, 3, 3}, rng);
  layer.bias = random_tensor({128}, rng);
  const Tensor y = mi::nn::conv2d_forward(x, layer);
  CHECK(y.shape == std::vector<int>{128, 20, 20});

  // Two input channels sum their contributions.
  Tensor xa = Tensor::zeros({2, 1, 1});
  xa.v = {3.0, 4.0};
  mi::nn::Conv2dLayer sum;
  sum.kernels = Tensor::zeros({1, 2, 1, 1});
  sum.kernels.v = {10.0, 100.0};
  sum.bias = Tensor::zeros({1});
  CHECK(mi::nn::conv2d_forward(xa, sum).v[0] == doctest::Approx(430.0));

  // Kernel larger than the input is rejected.
  mi::nn::Conv2dLayer big;
  big.kernels = Tensor::zeros({1, 1, 5, 5});
  big.bias = Tensor::zeros({1});
  CHECK_THROWS_AS(mi::nn::conv2d_forward(x2_dummy(), big), mi::Error);
}

TEST_CASE("conv2d gradients match finite differences") {
  mi::Rng rng(2);
  Tensor x = random_tensor({2, 5, 5}, rng);
  mi::nn::Conv2dLayer layer;
  layer.kernels = random_tensor({3, 2, 2, 2}, rng);
  layer.bias = random_tensor({3}, rng);
  const Tensor w = random_tensor({3, 4, 4}, rng);  // fixed loss projection

  auto loss = [&]() {
    const Tensor y = mi::nn::conv2d_forward(x, layer);
    return std::inner_product(y.v.begin(), y.v.end(), w.v.begin(), 0.0);
  };

  const Tensor y = mi::nn::conv2d_forward(x, layer);
  Tensor dy = w;
  Tensor dx = Tensor::zeros({2, 5, 5});
  layer.kernels.ensure_grad();
  layer.bias.ensure_grad();
  layer.kernels.zero_grad();
  layer.bias.zero_grad();
  mi::nn::conv2d_backward(x, layer, dy, &dx);
  x.g = dx.v;

  const double err = oracle::max_grad_rel_error(
      {&layer.kernels, &layer.bias, &x}, loss, 1e-5, 1e-5);
  CHECK(err <= 1e-5);
}

TEST_CASE("relu forward and backward") {
  Tensor x = Tensor::zeros({4});
  x.v = {-2.0, 0.0, 3.5, -0.1};
  const Tensor y = mi::nn::relu(x);
  CHECK(y.v == std::vector<double>{0.0, 0.0, 3.5, 0.0});

  Tensor dy = Tensor::zeros({4});
  dy.v = {1.0, 1.0, 1.0, 1.0};
  Tensor dx = Tensor::zeros({4});
  mi::nn::relu_backward(x, dy, dx);
  CHECK(dx.v == std::vector<double>{0.0, 0.0, 1.0, 0.0});

  // dx may alias dy.
  mi::nn::relu_backward(x, dy, dy);
  CHECK(dy.v == std::vector<double>{0.0, 0.0, 1.0, 0.0});
}

TEST_CASE("dropout: masks, scaling, and evaluation mode") {
  mi::Rng rng(9);
  CHECK_THROWS_AS(mi::nn::make_dropout_mask(4, -0.1, rng), mi::Error);
  try {
    mi::nn::make_dropout_mask(4, 1.0, rng);
    FAIL("expected invalid_probability");
  } catch (const mi::Error& e) {
    CHECK(e.code() == mi::Errc::invalid_probability);
  }

  const mi::nn::DropoutMask none = mi::nn::make_dropout_mask(16, 0.0, rng);
  for (double s : none.scale) CHECK(s == doctest::Approx(1.0));

  // Inverted scaling keeps the expectation: mean over 1e6 ones stays within
  // 1% of 1 for p = 0.8.
  const std::size_t n = 1000000;
  const mi::nn::DropoutMask mask = mi::nn::make_dropout_mask(n, 0.8, rng);
  const std::vector<double> ones(n, 1.0);
  const std::vector<double> dropped = mi::nn::apply_mask(mask, ones);
  const double mean =
      std::accumulate(dropped.begin(), dropped.end(), 0.0) / double(n);
  CHECK(mean == doctest::Approx(1.0).epsilon(0.01));
  for (double v : dropped) CHECK((v == 0.0 || v == doctest::Approx(5.0)));

  // Replaying the same mask is deterministic.
  CHECK(mi::nn::apply_mask(mask, ones) == dropped);

  // Evaluation mode is the identity regardless of p.
  const std::vector<double> x = {1.0, -2.0, 3.0};
  CHECK(mi::nn::dropout(x, 0.9, rng, false) == x);
}

TEST_CASE("gru step: fixed points and saturation") {
  mi::nn::GruCell cell;
  cell.wz = Tensor::zeros({1, 1});
  cell.wr = Tensor::zeros({1, 1});
  cell.wh = Tensor::zeros({1, 1});
  cell.uz = Tensor::zeros({1, 1});
  cell.ur = Tensor::zeros({1, 1});
  cell.uh = Tensor::zeros({1, 1});
  cell.bz = Tensor::zeros({1});
  cell.br = Tensor::zeros({1});
  cell.bh = Tensor::zeros({1});

  // All-zero cell and state: the new state is exactly zero.
  CHECK(mi::nn::gru_step(cell, {0.0}, {0.0})[0] == doctest::Approx(0.0));

  // Hand-evaluated step: z = r = 0.5, hcand = tanh(2).
  cell.wh.v[0] = 1.0;
  const double h = mi::nn::gru_step(cell, {2.0}, {0.3})[0];
  CHECK(h == doctest::Approx(0.5 * 0.3 + 0.5 * std::tanh(2.0)).epsilon(1e-12));

  // Saturated update and candidate gates drive the state to ~1.
  cell.bz.v[0] = 100.0;
  cell.bh.v[0] = 100.0;
  cell.wh.v[0] = 0.0;
  CHECK(mi::nn::gru_step(cell, {0.0}, {0.0})[0] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("gru step gradients match finite differences") {
  mi::Rng rng(3);
  mi::nn::GruCell cell;
  cell.wz = random_tensor({4, 3}, rng, 0.4);
  cell.wr = random_tensor({4, 3}, rng, 0.4);
  cell.wh = random_tensor({4, 3}, rng, 0.4);
  cell.uz = random_tensor({4, 4}, rng, 0.4);
  cell.ur = random_tensor({4, 4}, rng, 0.4);
  cell.uh = random_tensor({4, 4}, rng, 0.4);
  cell.bz = random_tensor({4}, rng, 0.2);
  cell.br = random_tensor({4}, rng, 0.2);
  cell.bh = random_tensor({4}, rng, 0.2);
  Tensor x = random_tensor({3}, rng);
  Tensor h0 = random_tensor({4}, rng);
  const Tensor c = random_tensor({4}, rng);  // loss projection

  auto loss = [&]() {
    const std::vector<double> h = mi::nn::gru_step(cell, x.v, h0.v);
    return std::inner_product(h.begin(), h.end(), c.v.begin(), 0.0);
  };

  mi::nn::GruStepCache cache;
  mi::nn::gru_step(cell, x.v, h0.v, &cache);
  std::vector<double> dh_prev, dx;
  for (Tensor* t : {&cell.wz, &cell.wr, &cell.wh, &cell.uz, &cell.ur, &cell.uh,
                    &cell.bz, &cell.br, &cell.bh}) {
    t->ensure_grad();
    t->zero_grad();
  }
  mi::nn::gru_step_backward(cell, cache, c.v, dh_prev, dx);
  x.g = dx;
  h0.g = dh_prev;

  const double err = oracle::max_grad_rel_error(
      {&cell.wz, &cell.wr, &cell.wh, &cell.uz, &cell.ur, &cell.uh, &cell.bz,
       &cell.br, &cell.bh, &x, &h0},
      loss, 1e-3, 1e-6);
  CHECK(err <= 1e-6);
}

TEST_CASE("backpropagation through a 5-step GRU chain matches FD") {
  mi::Rng rng(4);
  const int hidden = 3, steps = 5;
  mi::nn::GruCell cell;
  cell.wz = random_tensor({hidden, 1}, rng, 0.4);
  cell.wr = random_tensor({hidden, 1}, rng, 0.4);
  cell.wh = random_tensor({hidden, 1}, rng, 0.4);
  cell.uz = random_tensor({hidden, hidden}, rng, 0.4);
  cell.ur = random_tensor({hidden, hidden}, rng, 0.4);
  cell.uh = random_tensor({hidden, hidden}, rng, 0.4);
  cell.bz = random_tensor({hidden}, rng, 0.2);
  cell.br = random_tensor({hidden}, rng, 0.2);
  cell.bh = random_tensor({hidden}, rng, 0.2);
  const Tensor c = random_tensor({hidden}, rng);
  std::vector<double> inputs = {0.3, -0.8, 1.1, 0.05, -0.4};

  auto loss = [&]() {
    std::vector<double> h(static_cast<std::size_t>(hidden), 0.0);
    for (int t = 0; t < steps; ++t) {
      h = mi::nn::gru_step(cell, {inputs[static_cast<std::size_t>(t)]}, h);
    }
    return std::inner_product(h.begin(), h.end(), c.v.begin(), 0.0);
  };

  std::vector<mi::nn::GruStepCache> caches(steps);
  std::vector<double> h(static_cast<std::size_t>(hidden), 0.0);
  for (int t = 0; t < steps; ++t) {
    h = mi::nn::gru_step(cell, {inputs[static_cast<std::size_t>(t)]}, h,
                         &caches[static_cast<std::size_t>(t)]);
  }
  for (Tensor* t : {&cell.wz, &cell.wr, &cell.wh, &cell.uz, &cell.ur, &cell.uh,
                    &cell.bz, &cell.br, &cell.bh}) {
    t->ensure_grad();
    t->zero_grad();
  }
  std::vector<double> dh = c.v, dx;
  for (int t = steps - 1; t >= 0; --t) {
    std::vector<double> dh_prev;
    mi::nn::gru_step_backward(cell, caches[static_cast<std::size_t>(t)], dh,
                              dh_prev, dx);
    dh = dh_prev;
  }

  const double err = oracle::max_grad_rel_error(
      {&cell.wz, &cell.wr, &cell.wh, &cell.uz, &cell.ur, &cell.uh, &cell.bz,
       &cell.br, &cell.bh},
      loss, 1e-4, 1e-5);
  CHECK(err <= 1e-5);
}

TEST_CASE("dense layer forward and gradients") {
  mi::nn::DenseLayer layer;
  layer.w = Tensor::zeros({2, 3});
  layer.w.v = {1.0, 2.0, 3.0, 4.0, 5.0, 6.0};
  layer.b = Tensor::zeros({2});
  layer.b.v = {0.5, -0.5};
  const std::vector<double> y = mi::nn::dense_forward(layer, {1.0, 0.0, -1.0});
  REQUIRE(y.size() == 2);
  CHECK(y[0] == doctest::Approx(1.0 - 3.0 + 0.5));
  CHECK(y[1] == doctest::Approx(4.0 - 6.0 - 0.5));

  mi::Rng rng(6);
  mi::nn::DenseLayer rnd;
  rnd.w = random_tensor({2, 5}, rng);
  rnd.b = random_tensor({2}, rng);
  Tensor x = random_tensor({5}, rng);
  const Tensor c = random_tensor({2}, rng);
  auto loss = [&]() {
    const std::vector<double> out = mi::nn::dense_forward(rnd, x.v);
    return std::inner_product(out.begin(), out.end(), c.v.begin(), 0.0);
  };
  rnd.w.ensure_grad();
  rnd.w.zero_grad();
  rnd.b.ensure_grad();
  rnd.b.zero_grad();
  std::vector<double> dx;
  mi::nn::dense_backward(rnd, x.v, c.v, &dx);
  x.g = dx;
  CHECK(oracle::max_grad_rel_error({&rnd.w, &rnd.b, &x}, loss, 1e-5, 1e-5) <=
        1e-5);
}

TEST_CASE("softmax cross-entropy: values, stability, gradient structure") {
  const mi::nn::XentResult even = mi::nn::softmax_cross_entropy({0.0, 0.0}, 0);
  CHECK(even.loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(even.grad[0] == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(even.grad[1] == doctest::Approx(0.5).epsilon(1e-12));

  // Huge logits must not overflow.
  const mi::nn::XentResult big =
      mi::nn::softmax_cross_entropy({1000.0, 1000.0}, 1);
  CHECK(big.loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  const std::vector<double> probs = mi::nn::softmax({3.0, -1.0, 0.5});
  CHECK(std::accumulate(probs.begin(), probs.end(), 0.0) ==
        doctest::Approx(1.0).epsilon(1e-12));

  mi::Rng rng(8);
  for (int rep = 0; rep < 10; ++rep) {
    const std::vector<double> logits = {rng.normal() * 5, rng.normal() * 5,
                                        rng.normal() * 5};
    const mi::nn::XentResult r = mi::nn::softmax_cross_entropy(logits, 1);
    CHECK(std::abs(std::accumulate(r.grad.begin(), r.grad.end(), 0.0)) <=
          1e-12);
    // FD check on the loss itself.
    std::vector<double> bumped = logits;
    bumped[0] += 1e-6;
    const double fd =
        (mi::nn::softmax_cross_entropy(bumped, 1).loss - r.loss) / 1e-6;
    CHECK(fd == doctest::Approx(r.grad[0]).epsilon(1e-4));
  }

  try {
    mi::nn::softmax_cross_entropy({0.0, 0.0}, 2);
    FAIL("expected out_of_range");
  } catch (const mi::Error& e) {
    CHECK(e.code() == mi::Errc::out_of_range);
  }
}

TEST_CASE("adam: first-step size, zero-gradient fixed point, descent") {
  Tensor theta = Tensor::zeros({1});
  theta.v[0] = 1.0;
  theta.ensure_grad();
  mi::nn::AdamState adam;
  adam.lr = 1e-4;
  adam.init({&theta});

  // t = 1: m-hat = g, v-hat = g^2, so the step is lr * g / (|g| + eps).
  theta.g[0] = 2.0;
  adam.step({&theta});
  CHECK(std::abs(theta.v[0] - (1.0 - 1e-4)) <= 1e-11);

  // Accumulated momentum keeps moving the parameter even at zero gradient;
  // only a fresh optimizer state is a fixed point of g = 0.
  const double before = theta.v[0];
  theta.g[0] = 0.0;
  adam.step({&theta});
  CHECK(theta.v[0] != before);
  Tensor rest = Tensor::zeros({2});
  rest.v = {0.7, -0.4};
  rest.ensure_grad();
  rest.zero_grad();
  mi::nn::AdamState fresh;
  fresh.init({&rest});
  fresh.step({&rest});
  CHECK(rest.v[0] == 0.7);
  CHECK(rest.v[1] == -0.4);

  // Quadratic descent.
  Tensor q = Tensor::zeros({1});
  q.v[0] = 3.0;
  q.ensure_grad();
  mi::nn::AdamState opt;
  opt.lr = 0.05;
  opt.init({&q});
  for (int i = 0; i < 50; ++i) {
    q.g[0] = 2.0 * q.v[0];
    opt.step({&q});
  }
  CHECK(std::abs(q.v[0]) < 3.0);
  CHECK(q.v[0] > 0.0);  // has not overshot with 50 bounded steps

  // Parameter list mismatch is rejected.
  Tensor other = Tensor::zeros({3});
  other.ensure_grad();
  try {
    opt.step({&other});
    FAIL("expected shape_mismatch");
  } catch (const mi::Error& e) {
    CHECK(e.code() == mi::Errc::shape_mismatch);
  }
}

TEST_CASE("glorot initialization is bounded and seed-deterministic") {
  mi::Rng a(77), b(77), c(78);
  Tensor ta = Tensor::zeros({16, 9});
  Tensor tb = Tensor::zeros({16, 9});
  Tensor tc = Tensor::zeros({16, 9});
  mi::nn::glorot_uniform(ta, 9, 16, a);
  mi::nn::glorot_uniform(tb, 9, 16, b);
  mi::nn::glorot_uniform(tc, 9, 16, c);
  const double limit = std::sqrt(6.0 / (9.0 + 16.0));
  for (double v : ta.v) CHECK(std::abs(v) <= limit);
  CHECK(ta.v == tb.v);
  CHECK(ta.v != tc.v);
}
