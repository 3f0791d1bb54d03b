#include "advtext/classifier.hpp"

#include <algorithm>
#include <cmath>

#include "advtext/errors.hpp"

namespace advtext {

Prediction GradientModel::predict(std::span<const std::string> tokens) const {
  if (tokens.empty()) throw ContractError("predict: empty token sequence");
  return predict_embedded(embeddings().embed(tokens));
}

std::string to_string(Architecture a) {
  switch (a) {
    case Architecture::kCnn: return "cnn";
    case Architecture::kBiLstm: return "bilstm";
    case Architecture::kBiLstmAttention: return "bilstm-attn";
  }
  return "cnn";
}

Architecture parse_architecture(std::string_view name) {
  if (name == "cnn") return Architecture::kCnn;
  if (name == "bilstm") return Architecture::kBiLstm;
  if (name == "bilstm-attn" || name == "bilstm+a" || name == "bilstm_attention") {
    return Architecture::kBiLstmAttention;
  }
  throw ContractError("unknown architecture '" + std::string(name) + "'");
}

void ClassifierConfig::validate() const {
  if (!(dropout_prob >= 0.0 && dropout_prob < 1.0)) throw ContractError("dropout_prob must be in [0,1)");
  if (!(learning_rate > 0.0)) throw ContractError("learning_rate must be positive");
  if (batch_size == 0) throw ContractError("batch_size must be positive");
  if (architecture == Architecture::kCnn) {
    if (filter_widths.empty() || filters_per_width == 0) {
      throw ContractError("CNN needs filter widths and a positive filter count");
    }
    if (std::find(filter_widths.begin(), filter_widths.end(), 0u) != filter_widths.end()) {
      throw ContractError("filter widths must be positive");
    }
  } else {
    if (hidden_size == 0 || num_layers == 0) throw ContractError("recurrent model needs hidden_size and layers");
    if (architecture == Architecture::kBiLstmAttention && attention_size == 0) {
      throw ContractError("attention_size must be positive");
    }
  }
}

Classifier::Classifier(ClassifierConfig config, std::shared_ptr<const EmbeddingTable> table)
    : config_(std::move(config)), table_(std::move(table)) {
  if (!table_) throw ContractError("classifier needs an embedding table");
  config_.validate();
  init_parameters();
}

std::size_t Classifier::add_param(std::string name, Shape shape, std::mt19937_64* rng) {
  Tensor value(shape);
  if (rng != nullptr && shape.size() == 2) {
    const double limit = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
    for (double& v : value.values()) {
      const double u = static_cast<double>((*rng)() >> 11) * 0x1.0p-53;
      v = (2.0 * u - 1.0) * limit;
    }
  }
  param_index_.emplace(name, params_.size());
  params_.push_back({std::move(name), std::move(value)});
  return params_.size() - 1;
}

std::size_t Classifier::index(std::string_view name) const {
  const auto it = param_index_.find(std::string(name));
  if (it == param_index_.end()) throw ContractError("no parameter named '" + std::string(name) + "'");
  return it->second;
}

const Parameter& Classifier::parameter(std::string_view name) const { return params_[index(name)]; }

void Classifier::init_parameters() {
  std::mt19937_64 rng(config_.seed);
  const std::size_t d = table_->dimension();
  if (config_.architecture == Architecture::kCnn) {
    for (std::size_t w : config_.filter_widths) {
      const std::string base = "conv" + std::to_string(w);
      add_param(base + ".W", {w * d, config_.filters_per_width}, &rng);
      add_param(base + ".b", {config_.filters_per_width}, nullptr);
    }
  } else {
    const std::size_t h = config_.hidden_size;
    std::size_t in = d;
    for (std::size_t layer = 0; layer < config_.num_layers; ++layer) {
      for (const char* dir : {"fwd", "bwd"}) {
        const std::string base = "lstm" + std::to_string(layer) + "." + dir;
        add_param(base + ".Wx", {in, 4 * h}, &rng);
        add_param(base + ".Wh", {h, 4 * h}, &rng);
        const std::size_t b = add_param(base + ".b", {4 * h}, nullptr);
        for (std::size_t j = h; j < 2 * h; ++j) params_[b].value[j] = 1.0;  // forget gate
      }
      in = 2 * h;
    }
    if (config_.architecture == Architecture::kBiLstmAttention) {
      add_param("attn.W", {2 * h, config_.attention_size}, &rng);
      add_param("attn.b", {config_.attention_size}, nullptr);
      add_param("attn.v", {config_.attention_size, 1}, &rng);
    }
  }
  add_param("out.W", {feature_size(), 2}, &rng);
  add_param("out.b", {2}, nullptr);
}

std::size_t Classifier::feature_size() const {
  if (config_.architecture == Architecture::kCnn) {
    return config_.filter_widths.size() * config_.filters_per_width;
  }
  return 2 * config_.hidden_size;
}

void Classifier::set_training_state(bool trained, double dev_accuracy, std::vector<double> trace) {
  trained_ = trained;
  dev_accuracy_ = dev_accuracy;
  dev_trace_ = std::move(trace);
}

ad::Var Classifier::lstm_direction(ad::Tape& tape, ad::Var inputs, std::size_t wx, bool reverse,
                                   const std::vector<ad::Var>& bound) const {
  const std::size_t h = config_.hidden_size;
  const std::size_t n = inputs.value().rows();
  const ad::Var wh = bound[wx + 1];
  // Input projections for every step at once.
  const ad::Var projected = ad::add_bias(ad::matmul(inputs, bound[wx]), bound[wx + 2]);
  ad::Var hidden = tape.constant(Tensor({1, h}));
  ad::Var cell = tape.constant(Tensor({1, h}));
  std::vector<ad::Var> outputs(n);
  for (std::size_t step = 0; step < n; ++step) {
    const std::size_t t = reverse ? n - 1 - step : step;
    const ad::Var z = ad::add(ad::slice(projected, 0, t, t + 1), ad::matmul(hidden, wh));
    const ad::Var in_gate = ad::sigmoid(ad::slice(z, 1, 0, h));
    const ad::Var forget = ad::sigmoid(ad::slice(z, 1, h, 2 * h));
    const ad::Var candidate = ad::tanh(ad::slice(z, 1, 2 * h, 3 * h));
    const ad::Var out_gate = ad::sigmoid(ad::slice(z, 1, 3 * h, 4 * h));
    cell = ad::add(ad::mul(forget, cell), ad::mul(in_gate, candidate));
    hidden = ad::mul(out_gate, ad::tanh(cell));
    outputs[t] = hidden;
  }
  return ad::concat(outputs, 0);
}

ad::Var Classifier::forward(ad::Tape& tape, ad::Var rows, std::size_t n_real,
                            std::vector<Tensor>* param_grads, std::mt19937_64* rng,
                            ForwardTrace* trace) const {
  const std::size_t len = rows.value().rows();
  if (rows.value().rank() != 2 || rows.value().cols() != table_->dimension()) {
    throw DimensionError("classifier input " + shape_string(rows.value().shape()) +
                         " does not match embedding dimension " + std::to_string(table_->dimension()));
  }
  if (n_real == 0 || n_real > len) throw ContractError("classifier needs at least one real token");

  if (param_grads != nullptr && param_grads->size() != params_.size()) {
    param_grads->assign(params_.size(), Tensor());
  }
  std::vector<ad::Var> bound;
  bound.reserve(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor* sink = nullptr;
    if (param_grads != nullptr) {
      sink = &(*param_grads)[i];
      if (sink->shape() != params_[i].value.shape()) *sink = Tensor::zeros_like(params_[i].value);
    }
    bound.push_back(tape.parameter(params_[i].value, sink));
  }

  ad::Var features;
  if (config_.architecture == Architecture::kCnn) {
    ad::Var x = rows;
    if (len > n_real) {
      Tensor mask({len, table_->dimension()});
      for (std::size_t i = 0; i < n_real * table_->dimension(); ++i) mask[i] = 1.0;
      x = ad::mul(x, tape.constant(std::move(mask)));
    }
    const std::size_t widest = *std::max_element(config_.filter_widths.begin(), config_.filter_widths.end());
    if (len < widest) {
      const std::array<ad::Var, 2> parts{x, tape.constant(Tensor({widest - len, table_->dimension()}))};
      x = ad::concat(parts, 0);
    }
    std::vector<ad::Var> pooled;
    for (std::size_t w : config_.filter_widths) {
      const std::string base = "conv" + std::to_string(w);
      const ad::Var conv = ad::relu(ad::add_bias(ad::conv1d(x, bound[index(base + ".W")], w),
                                                 bound[index(base + ".b")]));
      // Windows starting past the last real token are padding.
      const std::size_t valid = n_real >= w ? n_real - w + 1 : 1;
      pooled.push_back(ad::max(ad::slice(conv, 0, 0, valid), 0));
    }
    features = ad::concat(pooled, 1);
  } else {
    ad::Var layer_input = len > n_real ? ad::slice(rows, 0, 0, n_real) : rows;
    for (std::size_t layer = 0; layer < config_.num_layers; ++layer) {
      const std::string base = "lstm" + std::to_string(layer);
      const std::array<ad::Var, 2> dirs{
          lstm_direction(tape, layer_input, index(base + ".fwd.Wx"), false, bound),
          lstm_direction(tape, layer_input, index(base + ".bwd.Wx"), true, bound)};
      layer_input = ad::concat(dirs, 1);
    }
    const ad::Var states = layer_input;  // [n x 2h]
    if (config_.architecture == Architecture::kBiLstm) {
      features = ad::mean(states, 0);
    } else {
      const ad::Var hidden = ad::tanh(ad::add_bias(ad::matmul(states, bound[index("attn.W")]),
                                                   bound[index("attn.b")]));
      const ad::Var scores = ad::reshape(ad::matmul(hidden, bound[index("attn.v")]), {1, n_real});
      const ad::Var weights = ad::softmax(scores);
      if (trace != nullptr) trace->attention = weights.value();
      features = ad::matmul(weights, states);
    }
  }
  if (trace != nullptr) trace->features = features.value();
  if (rng != nullptr && config_.dropout_prob > 0.0) features = ad::dropout(features, config_.dropout_prob, *rng);
  return ad::add_bias(ad::matmul(features, bound[index("out.W")]), bound[index("out.b")]);
}

Prediction Classifier::predict_embedded(const Tensor& rows) const {
  if (rows.rows() == 0) throw ContractError("predict: empty token sequence");
  ad::Tape tape;
  const ad::Var logits = forward(tape, tape.constant(rows), rows.rows(), nullptr, nullptr);
  return make_prediction(logits.value()[0], logits.value()[1]);
}

Tensor Classifier::embedding_gradient(const Tensor& rows, std::size_t n_real, Label label) const {
  ad::Tape tape;
  const ad::Var input = tape.variable(rows);
  const ad::Var logits = forward(tape, input, n_real, nullptr, nullptr);
  const ad::Var loss = ad::softmax_cross_entropy(logits, index_of(label));
  tape.backward(loss);
  return tape.grad(input);
}

ValueGradient Classifier::loss_gradient(const Tensor& rows, Label label) const {
  if (rows.rows() == 0) throw ContractError("loss_gradient: empty token sequence");
  ad::Tape tape;
  const ad::Var input = tape.variable(rows);
  const ad::Var logits = forward(tape, input, rows.rows(), nullptr, nullptr);
  const ad::Var loss = ad::softmax_cross_entropy(logits, index_of(label));
  tape.backward(loss);
  return {loss.value().item(), tape.grad(input)};
}

ValueGradient Classifier::margin_gradient(const Tensor& rows, Label label) const {
  if (rows.rows() == 0) throw ContractError("margin_gradient: empty token sequence");
  ad::Tape tape;
  const ad::Var input = tape.variable(rows);
  const ad::Var logits = forward(tape, input, rows.rows(), nullptr, nullptr);
  const std::size_t l = index_of(label), o = index_of(other(label));
  const ad::Var margin = ad::reshape(
      ad::add(ad::slice(logits, 1, l, l + 1), ad::scale(ad::slice(logits, 1, o, o + 1), -1.0)), {});
  tape.backward(margin);
  return {margin.value().item(), tape.grad(input)};
}

double Classifier::logit_margin(std::span<const std::string> tokens, Label label) const {
  const Prediction p = predict(tokens);
  return p.logit(label) - p.logit(other(label));
}

Tensor Classifier::input_gradient(std::span<const std::string> tokens, Label label) const {
  if (tokens.empty()) throw ContractError("input_gradient: empty token sequence");
  return loss_gradient(table_->embed(tokens), label).gradient;
}

ForwardTrace Classifier::inspect(std::span<const std::string> tokens) const {
  if (tokens.empty()) throw ContractError("inspect: empty token sequence");
  ad::Tape tape;
  ForwardTrace trace;
  const Tensor rows = table_->embed(tokens);
  forward(tape, tape.constant(rows), rows.rows(), nullptr, nullptr, &trace);
  return trace;
}

double accuracy(const ScoreModel& model, std::span<const corpus::Example> examples) {
  if (examples.empty()) throw ContractError("accuracy of an empty example list");
  std::size_t correct = 0;
  for (const auto& e : examples) {
    if (model.predict(e.tokens).label == e.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

}  // namespace advtext
