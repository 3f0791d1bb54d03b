#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "advtext/autodiff.hpp"
#include "advtext/errors.hpp"
#include "support.hpp"

using namespace advtext;
using test::random_tensor;

namespace {

using Builder = std::function<ad::Var(ad::Tape&, std::vector<ad::Var>&)>;

// Reduces build(inputs) to a scalar through fixed random weights so every
// output entry carries a distinct sensitivity.
double evaluate(const Builder& build, const std::vector<Tensor>& inputs, const Tensor& weights) {
  ad::Tape tape;
  std::vector<ad::Var> vars;
  for (const Tensor& t : inputs) vars.push_back(tape.constant(t));
  const ad::Var out = build(tape, vars);
  if (out.value().rank() == 0) return out.value().item();
  return ad::sum_all(ad::mul(out, tape.constant(weights))).value().item();
}

void check_gradients(const Builder& build, std::vector<Tensor> inputs, std::uint64_t seed = 1) {
  ad::Tape probe;
  std::vector<ad::Var> probe_vars;
  for (const Tensor& t : inputs) probe_vars.push_back(probe.constant(t));
  const Shape out_shape = build(probe, probe_vars).value().shape();
  std::mt19937_64 rng(seed);
  Tensor weights(out_shape);
  std::normal_distribution<double> normal;
  for (double& w : weights.values()) w = normal(rng);

  ad::Tape tape;
  std::vector<ad::Var> vars;
  for (const Tensor& t : inputs) vars.push_back(tape.variable(t));
  ad::Var out = build(tape, vars);
  if (out.value().rank() != 0) out = ad::sum_all(ad::mul(out, tape.constant(weights)));
  tape.backward(out);

  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor analytic = tape.grad(vars[i]);
    const Tensor numeric = test::numeric_gradient(
        [&](const Tensor& x) {
          std::vector<Tensor> copy = inputs;
          copy[i] = x;
          return evaluate(build, copy, weights);
        },
        inputs[i]);
    CHECK_MESSAGE(test::count_mismatches(analytic, numeric) == 0, "input " << i);
  }
}

}  // namespace

TEST_CASE("finite-difference checks for every primitive") {
  std::mt19937_64 rng(42);
  SUBCASE("matmul") {
    check_gradients([](ad::Tape&, auto& v) { return ad::matmul(v[0], v[1]); },
                    {random_tensor(3, 4, rng), random_tensor(4, 2, rng)});
  }
  SUBCASE("add and mul") {
    check_gradients([](ad::Tape&, auto& v) { return ad::mul(ad::add(v[0], v[1]), v[0]); },
                    {random_tensor(2, 3, rng), random_tensor(2, 3, rng)});
  }
  SUBCASE("scale and add_bias") {
    check_gradients([](ad::Tape&, auto& v) { return ad::add_bias(ad::scale(v[0], -1.7), v[1]); },
                    {random_tensor(4, 3, rng), Tensor({3}, random_tensor(1, 3, rng).values())});
  }
  SUBCASE("tanh, sigmoid, relu") {
    check_gradients([](ad::Tape&, auto& v) { return ad::tanh(v[0]); }, {random_tensor(3, 3, rng)});
    check_gradients([](ad::Tape&, auto& v) { return ad::sigmoid(v[0]); }, {random_tensor(3, 3, rng)});
    // keep entries away from the kink
    Tensor x = random_tensor(3, 3, rng);
    for (double& e : x.values()) e += e > 0 ? 0.1 : -0.1;
    check_gradients([](ad::Tape&, auto& v) { return ad::relu(v[0]); }, {x});
  }
  SUBCASE("concat and slice") {
    check_gradients(
        [](ad::Tape&, auto& v) {
          const ad::Var parts[] = {v[0], v[1]};
          return ad::slice(ad::concat(parts, 1), 1, 1, 4);
        },
        {random_tensor(2, 2, rng), random_tensor(2, 3, rng)});
    check_gradients(
        [](ad::Tape&, auto& v) {
          const ad::Var parts[] = {v[0], v[1]};
          return ad::slice(ad::concat(parts, 0), 0, 1, 3);
        },
        {random_tensor(2, 3, rng), random_tensor(1, 3, rng)});
  }
  SUBCASE("reshape, mean, sum_all") {
    check_gradients([](ad::Tape&, auto& v) { return ad::mean(ad::reshape(v[0], {3, 4}), 0); },
                    {random_tensor(2, 6, rng)});
    check_gradients([](ad::Tape&, auto& v) { return ad::mean(v[0], 1); }, {random_tensor(3, 5, rng)});
    check_gradients([](ad::Tape&, auto& v) { return ad::sum_all(v[0]); }, {random_tensor(2, 2, rng)});
  }
  SUBCASE("max over either axis") {
    check_gradients([](ad::Tape&, auto& v) { return ad::max(v[0], 0); }, {random_tensor(4, 3, rng)});
    check_gradients([](ad::Tape&, auto& v) { return ad::max(v[0], 1); }, {random_tensor(4, 3, rng)});
  }
  SUBCASE("conv1d") {
    check_gradients([](ad::Tape&, auto& v) { return ad::conv1d(v[0], v[1], 3); },
                    {random_tensor(5, 2, rng), random_tensor(6, 4, rng)});
  }
  SUBCASE("softmax and cross-entropy") {
    check_gradients([](ad::Tape&, auto& v) { return ad::softmax(v[0]); }, {random_tensor(2, 4, rng)});
    check_gradients([](ad::Tape&, auto& v) { return ad::softmax_cross_entropy(v[0], 1); },
                    {random_tensor(1, 2, rng)});
  }
  SUBCASE("dropout with a fixed mask") {
    check_gradients(
        [](ad::Tape&, auto& v) {
          std::mt19937_64 mask_rng(7);
          return ad::dropout(v[0], 0.3, mask_rng);
        },
        {random_tensor(3, 4, rng)});
  }
}

TEST_CASE("random three-layer network matches finite differences") {
  std::mt19937_64 rng(8);
  check_gradients(
      [](ad::Tape&, auto& v) {
        ad::Var h = ad::tanh(ad::add_bias(ad::matmul(v[0], v[1]), v[2]));
        h = ad::sigmoid(ad::matmul(h, v[3]));
        const ad::Var logits = ad::matmul(ad::mean(h, 0), v[4]);
        return ad::softmax_cross_entropy(logits, 0);
      },
      {random_tensor(4, 5, rng), random_tensor(5, 6, rng, 0.5), Tensor({6}, random_tensor(1, 6, rng).values()),
       random_tensor(6, 3, rng, 0.5), random_tensor(3, 2, rng)});
}

TEST_CASE("primitive forward values") {
  ad::Tape tape;
  std::mt19937_64 rng(1);
  const Tensor x = random_tensor(3, 4, rng);
  Tensor eye({3, 3});
  for (std::size_t i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
  CHECK(ad::matmul(tape.constant(eye), tape.constant(x)).value() == x);

  const ad::Var zero = tape.constant(Tensor({1, 2}));
  CHECK(ad::softmax_cross_entropy(zero, 0).value().item() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(ad::softmax_cross_entropy(zero, 1).value().item() == doctest::Approx(std::log(2.0)).epsilon(1e-15));

  const ad::Var conv = ad::conv1d(tape.constant(Tensor({5, 2})), tape.constant(Tensor({6, 4})), 3);
  CHECK(conv.shape() == Shape{3, 4});
}

TEST_CASE("scalar chain rule and mean gradient") {
  ad::Tape tape;
  const ad::Var x = tape.variable(Tensor::scalar(3.0));
  const ad::Var y = tape.variable(Tensor::scalar(-2.5));
  tape.backward(ad::mul(x, y));
  CHECK(tape.grad(x).item() == -2.5);
  CHECK(tape.grad(y).item() == 3.0);

  ad::Tape t2;
  const ad::Var v = t2.variable(Tensor({2, 4}, 1.0));
  t2.backward(ad::sum_all(ad::mean(ad::reshape(v, {1, 8}), 1)));
  const Tensor g = t2.grad(v);
  for (double e : g.values()) CHECK(e == doctest::Approx(1.0 / 8));
}

TEST_CASE("max routes gradient only to the argmax entries") {
  ad::Tape tape;
  const ad::Var x = tape.variable(Tensor::matrix(3, 2, {1.0, 5.0, 4.0, 2.0, 3.0, 6.0}));
  std::vector<std::size_t> argmax;
  tape.backward(ad::sum_all(ad::max(x, 0, &argmax)));
  CHECK(argmax == std::vector<std::size_t>{1, 2});
  CHECK(tape.grad(x).values() == std::vector<double>{0, 0, 1, 0, 0, 1});
}

TEST_CASE("fan-in accumulates gradients") {
  ad::Tape tape;
  const ad::Var x = tape.variable(Tensor::matrix(1, 2, {1.0, 2.0}));
  tape.backward(ad::sum_all(ad::add(ad::mul(x, x), x)));
  CHECK(tape.grad(x).values() == std::vector<double>{3.0, 5.0});
}

TEST_CASE("errors") {
  ad::Tape tape;
  const ad::Var a = tape.variable(Tensor({2, 3}));
  const ad::Var b = tape.variable(Tensor({2, 3}));
  CHECK_THROWS_AS(ad::matmul(a, b), DimensionError);
  CHECK_THROWS_AS(ad::add(a, tape.constant(Tensor({3, 2}))), DimensionError);
  CHECK_THROWS_AS(ad::conv1d(a, tape.variable(Tensor({12, 1})), 4), DimensionError);
  CHECK_THROWS_AS(tape.backward(a), ContractError);

  ad::Tape other;
  CHECK_THROWS_AS(ad::add(a, other.constant(Tensor({2, 3}))), ContractError);

  const ad::Var loss = ad::sum_all(a);
  tape.backward(loss);
  CHECK_THROWS_AS(tape.backward(loss), ContractError);
}

TEST_CASE("forward and backward are deterministic") {
  std::mt19937_64 r1(5), r2(5);
  const auto run = [](std::mt19937_64& rng) {
    ad::Tape tape;
    const ad::Var x = tape.variable(random_tensor(4, 4, rng));
    const ad::Var w = tape.variable(random_tensor(4, 2, rng));
    const ad::Var loss = ad::softmax_cross_entropy(ad::mean(ad::tanh(ad::matmul(x, w)), 0), 1);
    tape.backward(loss);
    return std::make_pair(loss.value().item(), tape.grad(x));
  };
  const auto a = run(r1);
  const auto b = run(r2);
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}
