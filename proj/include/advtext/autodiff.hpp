#pragma once

// Minimal reverse-mode automatic differentiation over dense double tensors.
//
// A Tape records primitives in execution order; node ids are therefore a
// topological order and backward() walks them once in reverse. Shapes are
// explicit: the only broadcast is add_bias (row vector onto every row).

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "advtext/tensor.hpp"

namespace advtext::ad {

class Tape;

class Var {
 public:
  Var() = default;

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  // Propagates the gradient of node `self` into its operands.
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);
  // Leaf whose gradient is added into `grad_sink` by backward(). A null sink
  // makes it a constant.
  Var parameter(const Tensor& value, Tensor* grad_sink);

  Var record(Tensor value, bool requires_grad, Backward backward);

  void backward(Var loss);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  // Gradient accumulated for `v`; zeros if nothing flowed into it.
  Tensor grad(Var v) const;
  Tensor& grad_ref(std::size_t id);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Backward backward;
    Tensor* grad_sink = nullptr;
  };

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// Primitives. All operands must live on the same tape.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_bias(Var x, Var bias);
Var tanh(Var x);
Var sigmoid(Var x);
Var relu(Var x);
Var concat(std::span<const Var> parts, std::size_t axis);
Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end);
Var reshape(Var x, Shape shape);
// Reduction keeps rank: axis 0 of [m x n] gives [1 x n].
Var mean(Var x, std::size_t axis);
// Max reduction; the chosen indices are written to `argmax` when given and
// only those positions receive gradient.
Var max(Var x, std::size_t axis, std::vector<std::size_t>* argmax = nullptr);
Var sum_all(Var x);
// Valid 1-d convolution over the token axis: x [L x d], filters [(width*d) x F]
// gives [(L - width + 1) x F].
Var conv1d(Var x, Var filters, std::size_t width);
// Row-wise softmax.
Var softmax(Var x);
// Mean negative log-likelihood of `label` under softmax(logits); logits [1 x C].
Var softmax_cross_entropy(Var logits, std::size_t label);
// Inverted dropout; identity when drop_prob == 0.
Var dropout(Var x, double drop_prob, std::mt19937_64& rng);

}  // namespace advtext::ad
