#include "advtext/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "advtext/errors.hpp"

namespace advtext::ad {

namespace {

[[noreturn]] void shape_mismatch(const char* op, const Shape& a, const Shape& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " +
                       shape_string(b));
}

void require_rank2(const char* op, const Tensor& t) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
  }
}

void same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw ContractError("operands live on different tapes");
}

double sigmoid_scalar(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Tensor value) { return record(std::move(value), false, nullptr); }

Var Tape::variable(Tensor value) { return record(std::move(value), true, nullptr); }

Var Tape::parameter(const Tensor& value, Tensor* grad_sink) {
  Var v = record(value, grad_sink != nullptr, nullptr);
  nodes_.back().grad_sink = grad_sink;
  return v;
}

Var Tape::record(Tensor value, bool requires_grad, Backward backward) {
  if (backward_done_) throw ContractError("tape already differentiated");
  nodes_.push_back(Node{std::move(value), Tensor(), requires_grad, std::move(backward), nullptr});
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_ref(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) n.grad = Tensor::zeros_like(n.value);
  return n.grad;
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  return n.grad.empty() ? Tensor::zeros_like(n.value) : n.grad;
}

void Tape::backward(Var loss) {
  if (&loss.tape() != this) throw ContractError("loss belongs to another tape");
  const Tensor& lv = nodes_[loss.id()].value;
  if (lv.rank() != 0) {
    throw ContractError("backward needs a scalar loss, got shape " + shape_string(lv.shape()));
  }
  if (backward_done_) throw ContractError("backward already called on this tape");
  backward_done_ = true;
  if (!nodes_[loss.id()].requires_grad) return;
  grad_ref(loss.id())[0] = 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, id);
    if (n.grad_sink != nullptr) {
      Tensor& sink = *n.grad_sink;
      if (sink.shape() != n.value.shape()) sink = Tensor::zeros_like(n.value);
      for (std::size_t i = 0; i < sink.size(); ++i) sink[i] += n.grad[i];
    }
  }
}

Var matmul(Var a, Var b) {
  same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank2("matmul", av);
  require_rank2("matmul", bv);
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  if (bv.rows() != k) shape_mismatch("matmul", av.shape(), bv.shape());
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t t = 0; t < k; ++t) {
      const double aik = av[i * k + t];
      if (aik == 0.0) continue;
      const double* brow = bv.data().data() + t * n;
      double* orow = out.data().data() + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }
  Tape& tape = a.tape();
  const bool rg = tape.requires_grad(a.id()) || tape.requires_grad(b.id());
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), rg, [ia, ib, m, k, n](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    if (t.requires_grad(ia)) {
      const Tensor& bv = t.value(ib);
      Tensor& ga = t.grad_ref(ia);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t q = 0; q < k; ++q) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bv[q * n + j];
          ga[i * k + q] += acc;
        }
    }
    if (t.requires_grad(ib)) {
      const Tensor& av = t.value(ia);
      Tensor& gb = t.grad_ref(ib);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t q = 0; q < k; ++q) {
          const double aiq = av[i * k + q];
          if (aiq == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) gb[q * n + j] += aiq * g[i * n + j];
        }
    }
  });
}

Var add(Var a, Var b) {
  same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) shape_mismatch("add", av.shape(), bv.shape());
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  Tape& tape = a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  const bool rg = tape.requires_grad(ia) || tape.requires_grad(ib);
  return tape.record(std::move(out), rg, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    for (std::size_t id : {ia, ib}) {
      if (!t.requires_grad(id)) continue;
      Tensor& gi = t.grad_ref(id);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
}

Var mul(Var a, Var b) {
  same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) shape_mismatch("mul", av.shape(), bv.shape());
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  Tape& tape = a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  const bool rg = tape.requires_grad(ia) || tape.requires_grad(ib);
  return tape.record(std::move(out), rg, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    if (t.requires_grad(ia)) {
      const Tensor& bv = t.value(ib);
      Tensor& ga = t.grad_ref(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(ib)) {
      const Tensor& av = t.value(ia);
      Tensor& gb = t.grad_ref(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= factor;
  Tape& tape = a.tape();
  const std::size_t ia = a.id();
  return tape.record(std::move(out), tape.requires_grad(ia), [ia, factor](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    Tensor& ga = t.grad_ref(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
}

Var add_bias(Var x, Var bias) {
  same_tape(x, bias);
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  require_rank2("add_bias", xv);
  if (bv.rank() != 1 || bv.size() != xv.cols()) shape_mismatch("add_bias", xv.shape(), bv.shape());
  const std::size_t m = xv.rows(), n = xv.cols();
  Tensor out = xv;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
  Tape& tape = x.tape();
  const std::size_t ix = x.id(), ib = bias.id();
  const bool rg = tape.requires_grad(ix) || tape.requires_grad(ib);
  return tape.record(std::move(out), rg, [ix, ib, m, n](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    if (t.requires_grad(ix)) {
      Tensor& gx = t.grad_ref(ix);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad_ref(ib);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
    }
  });
}

namespace {

// Elementwise map whose derivative is expressed through the output value.
template <typename Fwd, typename DerivFromOut>
Var unary(Var x, Fwd fwd, DerivFromOut deriv) {
  Tensor out = x.value();
  for (double& v : out.values()) v = fwd(v);
  Tape& tape = x.tape();
  const std::size_t ix = x.id();
  return tape.record(std::move(out), tape.requires_grad(ix), [ix, deriv](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    const Tensor& y = t.value(self);
    Tensor& gx = t.grad_ref(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(y[i]);
  });
}

}  // namespace

Var tanh(Var x) {
  return unary(x, [](double v) { return std::tanh(v); }, [](double y) { return 1.0 - y * y; });
}

Var sigmoid(Var x) {
  return unary(x, sigmoid_scalar, [](double y) { return y * (1.0 - y); });
}

Var relu(Var x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double y) { return y > 0.0 ? 1.0 : 0.0; });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat of zero tensors");
  if (axis > 1) throw DimensionError("concat axis must be 0 or 1");
  Tape& tape = parts[0].tape();
  const Tensor& first = parts[0].value();
  require_rank2("concat", first);
  std::size_t rows = first.rows(), cols = first.cols();
  std::size_t total = 0;
  for (const Var& p : parts) {
    same_tape(parts[0], p);
    const Tensor& v = p.value();
    require_rank2("concat", v);
    if (axis == 0 && v.cols() != cols) shape_mismatch("concat", first.shape(), v.shape());
    if (axis == 1 && v.rows() != rows) shape_mismatch("concat", first.shape(), v.shape());
    total += axis == 0 ? v.rows() : v.cols();
  }
  if (axis == 0) rows = total; else cols = total;
  Tensor out({rows, cols});
  std::vector<std::size_t> ids;
  std::vector<std::size_t> extents;
  bool rg = false;
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    if (axis == 0) {
      std::copy(v.values().begin(), v.values().end(), out.values().begin() + offset * cols);
      extents.push_back(v.rows());
      offset += v.rows();
    } else {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < v.cols(); ++c) out[r * cols + offset + c] = v.at(r, c);
      extents.push_back(v.cols());
      offset += v.cols();
    }
    ids.push_back(p.id());
    rg = rg || tape.requires_grad(p.id());
  }
  return tape.record(std::move(out), rg, [ids, extents, axis, rows, cols](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    std::size_t offset = 0;
    for (std::size_t p = 0; p < ids.size(); ++p) {
      if (t.requires_grad(ids[p])) {
        Tensor& gp = t.grad_ref(ids[p]);
        if (axis == 0) {
          for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offset * cols + i];
        } else {
          const std::size_t w = extents[p];
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < w; ++c) gp[r * w + c] += g[r * cols + offset + c];
        }
      }
      offset += extents[p];
    }
  });
}

Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end) {
  const Tensor& xv = x.value();
  require_rank2("slice", xv);
  const std::size_t rows = xv.rows(), cols = xv.cols();
  const std::size_t extent = axis == 0 ? rows : cols;
  if (axis > 1 || begin >= end || end > extent) {
    throw DimensionError("slice [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") on axis " + std::to_string(axis) + " of " + shape_string(xv.shape()));
  }
  const std::size_t orows = axis == 0 ? end - begin : rows;
  const std::size_t ocols = axis == 1 ? end - begin : cols;
  Tensor out({orows, ocols});
  const std::size_t r0 = axis == 0 ? begin : 0, c0 = axis == 1 ? begin : 0;
  for (std::size_t r = 0; r < orows; ++r)
    for (std::size_t c = 0; c < ocols; ++c) out[r * ocols + c] = xv[(r + r0) * cols + c + c0];
  Tape& tape = x.tape();
  const std::size_t ix = x.id();
  return tape.record(std::move(out), tape.requires_grad(ix),
                     [ix, orows, ocols, cols, r0, c0](Tape& t, std::size_t self) {
                       const Tensor& g = t.grad_ref(self);
                       Tensor& gx = t.grad_ref(ix);
                       for (std::size_t r = 0; r < orows; ++r)
                         for (std::size_t c = 0; c < ocols; ++c)
                           gx[(r + r0) * cols + c + c0] += g[r * ocols + c];
                     });
}

Var reshape(Var x, Shape shape) {
  const Tensor& xv = x.value();
  if (numel(shape) != xv.size()) shape_mismatch("reshape", xv.shape(), shape);
  Tensor out(std::move(shape), xv.values());
  Tape& tape = x.tape();
  const std::size_t ix = x.id();
  return tape.record(std::move(out), tape.requires_grad(ix), [ix](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    Tensor& gx = t.grad_ref(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Var mean(Var x, std::size_t axis) {
  const Tensor& xv = x.value();
  require_rank2("mean", xv);
  if (axis > 1) throw DimensionError("mean axis must be 0 or 1");
  const std::size_t m = xv.rows(), n = xv.cols();
  Tensor out(axis == 0 ? Shape{1, n} : Shape{m, 1});
  const double inv = 1.0 / static_cast<double>(axis == 0 ? m : n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[axis == 0 ? j : i] += xv[i * n + j] * inv;
  Tape& tape = x.tape();
  const std::size_t ix = x.id();
  return tape.record(std::move(out), tape.requires_grad(ix), [ix, m, n, axis, inv](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    Tensor& gx = t.grad_ref(ix);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[axis == 0 ? j : i] * inv;
  });
}

Var max(Var x, std::size_t axis, std::vector<std::size_t>* argmax) {
  const Tensor& xv = x.value();
  require_rank2("max", xv);
  if (axis > 1) throw DimensionError("max axis must be 0 or 1");
  const std::size_t m = xv.rows(), n = xv.cols();
  const std::size_t outer = axis == 0 ? n : m;
  const std::size_t inner = axis == 0 ? m : n;
  Tensor out(axis == 0 ? Shape{1, n} : Shape{m, 1});
  std::vector<std::size_t> flat(outer);  // flat index into x of each winner
  std::vector<std::size_t> arg(outer);
  for (std::size_t o = 0; o < outer; ++o) {
    double best = -std::numeric_limits<double>::infinity();
    std::size_t best_k = 0;
    for (std::size_t k = 0; k < inner; ++k) {
      const double v = axis == 0 ? xv[k * n + o] : xv[o * n + k];
      if (k == 0 || v > best) {
        best = v;
        best_k = k;
      }
    }
    out[o] = best;
    arg[o] = best_k;
    flat[o] = axis == 0 ? best_k * n + o : o * n + best_k;
  }
  if (argmax != nullptr) *argmax = arg;
  Tape& tape = x.tape();
  const std::size_t ix = x.id();
  return tape.record(std::move(out), tape.requires_grad(ix), [ix, flat](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    Tensor& gx = t.grad_ref(ix);
    for (std::size_t o = 0; o < flat.size(); ++o) gx[flat[o]] += g[o];
  });
}

Var sum_all(Var x) {
  const Tensor& xv = x.value();
  double acc = 0.0;
  for (double v : xv.values()) acc += v;
  Tape& tape = x.tape();
  const std::size_t ix = x.id();
  return tape.record(Tensor::scalar(acc), tape.requires_grad(ix), [ix](Tape& t, std::size_t self) {
    const double g = t.grad_ref(self)[0];
    Tensor& gx = t.grad_ref(ix);
    for (double& v : gx.values()) v += g;
  });
}

Var conv1d(Var x, Var filters, std::size_t width) {
  same_tape(x, filters);
  const Tensor& xv = x.value();
  const Tensor& wv = filters.value();
  require_rank2("conv1d", xv);
  require_rank2("conv1d", wv);
  const std::size_t len = xv.rows(), dim = xv.cols(), nf = wv.cols();
  if (width == 0 || wv.rows() != width * dim) shape_mismatch("conv1d", xv.shape(), wv.shape());
  if (len < width) {
    throw DimensionError("conv1d: input " + shape_string(xv.shape()) + " shorter than width " +
                         std::to_string(width));
  }
  const std::size_t out_len = len - width + 1;
  const std::size_t span_len = width * dim;
  Tensor out({out_len, nf});
  for (std::size_t pos = 0; pos < out_len; ++pos) {
    const double* window = xv.data().data() + pos * dim;  // rows pos..pos+width-1 are contiguous
    double* orow = out.data().data() + pos * nf;
    for (std::size_t q = 0; q < span_len; ++q) {
      const double xq = window[q];
      if (xq == 0.0) continue;
      const double* wrow = wv.data().data() + q * nf;
      for (std::size_t f = 0; f < nf; ++f) orow[f] += xq * wrow[f];
    }
  }
  Tape& tape = x.tape();
  const std::size_t ix = x.id(), iw = filters.id();
  const bool rg = tape.requires_grad(ix) || tape.requires_grad(iw);
  return tape.record(std::move(out), rg, [ix, iw, out_len, span_len, nf, dim](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    const bool gx_needed = t.requires_grad(ix);
    const bool gw_needed = t.requires_grad(iw);
    const Tensor& xv = t.value(ix);
    const Tensor& wv = t.value(iw);
    Tensor* gx = gx_needed ? &t.grad_ref(ix) : nullptr;
    Tensor* gw = gw_needed ? &t.grad_ref(iw) : nullptr;
    for (std::size_t pos = 0; pos < out_len; ++pos) {
      const double* grow = g.data().data() + pos * nf;
      for (std::size_t q = 0; q < span_len; ++q) {
        const std::size_t xi = pos * dim + q;
        if (gw != nullptr) {
          const double xq = xv[xi];
          if (xq != 0.0) {
            double* gwrow = gw->data().data() + q * nf;
            for (std::size_t f = 0; f < nf; ++f) gwrow[f] += xq * grow[f];
          }
        }
        if (gx != nullptr) {
          const double* wrow = wv.data().data() + q * nf;
          double acc = 0.0;
          for (std::size_t f = 0; f < nf; ++f) acc += wrow[f] * grow[f];
          (*gx)[xi] += acc;
        }
      }
    }
  });
}

Var softmax(Var x) {
  const Tensor& xv = x.value();
  require_rank2("softmax", xv);
  const std::size_t m = xv.rows(), n = xv.cols();
  Tensor out = xv;
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, xv[i * n + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = std::exp(xv[i * n + j] - mx);
      z += out[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
  }
  Tape& tape = x.tape();
  const std::size_t ix = x.id();
  return tape.record(std::move(out), tape.requires_grad(ix), [ix, m, n](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_ref(self);
    const Tensor& y = t.value(self);
    Tensor& gx = t.grad_ref(ix);
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y[i * n + j];
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += y[i * n + j] * (g[i * n + j] - dot);
    }
  });
}

Var softmax_cross_entropy(Var logits, std::size_t label) {
  const Tensor& lv = logits.value();
  const std::size_t c = lv.size();
  if (!((lv.rank() == 2 && lv.rows() == 1) || lv.rank() == 1) || label >= c) {
    throw DimensionError("softmax_cross_entropy: logits " + shape_string(lv.shape()) +
                         " with label " + std::to_string(label));
  }
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : lv.values()) mx = std::max(mx, v);
  std::vector<double> probs(c);
  double z = 0.0;
  for (std::size_t j = 0; j < c; ++j) {
    probs[j] = std::exp(lv[j] - mx);
    z += probs[j];
  }
  for (double& p : probs) p /= z;
  const double loss = std::log(z) + mx - lv[label];
  Tape& tape = logits.tape();
  const std::size_t il = logits.id();
  return tape.record(Tensor::scalar(loss), tape.requires_grad(il),
                     [il, probs, label](Tape& t, std::size_t self) {
                       const double g = t.grad_ref(self)[0];
                       Tensor& gl = t.grad_ref(il);
                       for (std::size_t j = 0; j < probs.size(); ++j)
                         gl[j] += g * (probs[j] - (j == label ? 1.0 : 0.0));
                     });
}

Var dropout(Var x, double drop_prob, std::mt19937_64& rng) {
  if (drop_prob < 0.0 || drop_prob >= 1.0) throw ContractError("dropout probability outside [0,1)");
  if (drop_prob == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - drop_prob);
  Tensor mask = Tensor::zeros_like(x.value());
  for (double& v : mask.values()) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    v = u >= drop_prob ? keep_scale : 0.0;
  }
  return mul(x, x.tape().constant(std::move(mask)));
}

}  // namespace advtext::ad
