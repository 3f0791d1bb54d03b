#include <cmath>
#include <numeric>

#include "advtext/classifier.hpp"
#include "advtext/errors.hpp"

namespace advtext {

namespace {

struct AdamState {
  std::vector<Tensor> first;
  std::vector<Tensor> second;
  std::size_t step = 0;
};

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

void adam_update(std::vector<Parameter>& params, std::vector<Tensor>& grads, AdamState& state, double lr,
                 double batch) {
  if (state.first.empty()) {
    for (const Parameter& p : params) {
      state.first.push_back(Tensor::zeros_like(p.value));
      state.second.push_back(Tensor::zeros_like(p.value));
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& g = grads[i];
    if (g.empty()) continue;
    Tensor& m = state.first[i];
    Tensor& v = state.second[i];
    Tensor& w = params[i].value;
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = g[k] / batch;
      m[k] = kBeta1 * m[k] + (1.0 - kBeta1) * gk;
      v[k] = kBeta2 * v[k] + (1.0 - kBeta2) * gk * gk;
      w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + kAdamEps);
      g[k] = 0.0;
    }
  }
}

}  // namespace

Classifier train(Classifier model, std::span<const corpus::Example> train_set,
                 std::span<const corpus::Example> dev_set, const TrainingOptions& options) {
  if (train_set.empty() || dev_set.empty()) throw ContractError("training needs non-empty train and dev splits");
  const ClassifierConfig& config = model.config();
  if (config.max_epochs == 0) {
    model.set_training_state(false, accuracy(model, dev_set), {});
    return model;
  }

  const EmbeddingTable& table = model.embeddings();
  std::vector<Tensor> inputs;
  inputs.reserve(train_set.size());
  for (const auto& e : train_set) {
    if (e.tokens.empty()) throw ContractError("training example '" + e.id + "' has no tokens");
    inputs.push_back(table.embed(e.tokens));
  }

  std::mt19937_64 rng(config.seed ^ 0x5eedULL);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Tensor> grads;
  AdamState adam;

  std::vector<Parameter> best = model.parameters();
  double best_acc = -1.0;
  std::size_t since_best = 0;
  std::vector<double> trace;

  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t ex = order[k];
        ad::Tape tape;
        const ad::Var rows = tape.constant(inputs[ex]);
        const ad::Var logits = model.forward(tape, rows, inputs[ex].rows(), &grads, &rng);
        const ad::Var loss = ad::softmax_cross_entropy(logits, index_of(train_set[ex].label));
        if (!std::isfinite(loss.value().item())) {
          throw TrainingError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                              std::to_string(batch_index + 1));
        }
        tape.backward(loss);
      }
      adam_update(model.parameters(), grads, adam, config.learning_rate, static_cast<double>(end - start));
    }
    const double dev_acc = accuracy(model, dev_set);
    trace.push_back(dev_acc);
    if (options.on_epoch) options.on_epoch(epoch + 1, dev_acc);
    if (dev_acc > best_acc) {
      best_acc = dev_acc;
      best = model.parameters();
      since_best = 0;
    } else if (++since_best >= config.early_stop_patience) {
      break;
    }
  }
  model.parameters() = std::move(best);
  model.set_training_state(true, best_acc, std::move(trace));
  return model;
}

}  // namespace advtext
