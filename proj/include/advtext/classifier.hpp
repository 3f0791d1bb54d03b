#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "advtext/autodiff.hpp"
#include "advtext/corpus.hpp"
#include "advtext/embeddings.hpp"
#include "advtext/model.hpp"

namespace advtext {

enum class Architecture { kCnn, kBiLstm, kBiLstmAttention };

std::string to_string(Architecture a);
// Accepts "cnn", "bilstm" and "bilstm-attn".
Architecture parse_architecture(std::string_view name);

struct ClassifierConfig {
  Architecture architecture = Architecture::kCnn;
  std::size_t hidden_size = 64;                 // recurrent units per direction
  std::size_t num_layers = 1;                   // recurrent only
  std::vector<std::size_t> filter_widths{3, 4, 5};  // CNN only
  std::size_t filters_per_width = 32;           // CNN only
  std::size_t attention_size = 32;              // attention only
  double dropout_prob = 0.0;
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 10;
  std::size_t early_stop_patience = 3;
  std::uint64_t seed = 1;

  void validate() const;
};

struct Parameter {
  std::string name;
  Tensor value;
};

// Values recorded during a forward pass, for inspection and tests.
struct ForwardTrace {
  Tensor features;                    // pooled representation fed to the output layer
  std::optional<Tensor> attention;    // [1 x L] weights, attention model only
};

class Classifier final : public GradientModel {
 public:
  // Builds an untrained model with seeded initial parameters.
  Classifier(ClassifierConfig config, std::shared_ptr<const EmbeddingTable> table);

  const ClassifierConfig& config() const { return config_; }
  std::shared_ptr<const EmbeddingTable> table() const { return table_; }
  const EmbeddingTable& embeddings() const override { return *table_; }

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  const Parameter& parameter(std::string_view name) const;

  // Penultimate feature width (input to the output layer).
  std::size_t feature_size() const;

  bool trained() const { return trained_; }
  double dev_accuracy() const { return dev_accuracy_; }
  const std::vector<double>& dev_trace() const { return dev_trace_; }
  void set_training_state(bool trained, double dev_accuracy, std::vector<double> trace);

  Prediction predict_embedded(const Tensor& rows) const override;
  ValueGradient loss_gradient(const Tensor& rows, Label label) const override;
  ValueGradient margin_gradient(const Tensor& rows, Label label) const override;

  double logit_margin(std::span<const std::string> tokens, Label label) const;
  Tensor input_gradient(std::span<const std::string> tokens, Label label) const;
  // Loss gradient for every row of `rows`, where rows past `n_real` are
  // padding and must receive zero gradient.
  Tensor embedding_gradient(const Tensor& rows, std::size_t n_real, Label label) const;
  ForwardTrace inspect(std::span<const std::string> tokens) const;

  // Builds the network on `tape` and returns [1 x 2] logits. When
  // `param_grads` is non-null its tensors receive parameter gradients on
  // backward(); `rng` enables dropout.
  ad::Var forward(ad::Tape& tape, ad::Var rows, std::size_t n_real, std::vector<Tensor>* param_grads,
                  std::mt19937_64* rng, ForwardTrace* trace = nullptr) const;

 private:
  void init_parameters();
  // Glorot-uniform when `rng` is given, zeros otherwise.
  std::size_t add_param(std::string name, Shape shape, std::mt19937_64* rng);
  std::size_t index(std::string_view name) const;
  ad::Var lstm_direction(ad::Tape& tape, ad::Var inputs, std::size_t wx, bool reverse,
                         const std::vector<ad::Var>& bound) const;

  ClassifierConfig config_;
  std::shared_ptr<const EmbeddingTable> table_;
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> param_index_;
  bool trained_ = false;
  double dev_accuracy_ = 0.0;
  std::vector<double> dev_trace_;
};

double accuracy(const ScoreModel& model, std::span<const corpus::Example> examples);

struct TrainingOptions {
  // Called after each epoch with (epoch, dev accuracy).
  std::function<void(std::size_t, double)> on_epoch;
};

// Adaptive-moment minibatch training on cross-entropy with frozen embeddings.
// Keeps the parameters of the best dev-accuracy epoch; stops after
// `early_stop_patience` epochs without improvement.
Classifier train(Classifier model, std::span<const corpus::Example> train_set,
                 std::span<const corpus::Example> dev_set, const TrainingOptions& options = {});

// JSON checkpoint with config, parameters and the embedding-table fingerprint.
void save_checkpoint(const Classifier& model, const std::filesystem::path& path,
                     const std::string& table_path_hint = "");
// Verifies that `table` matches the fingerprint recorded at training time.
Classifier load_checkpoint(const std::filesystem::path& path, std::shared_ptr<const EmbeddingTable> table);
// Embedding-table path recorded in a checkpoint ("" when absent).
std::string checkpoint_table_hint(const std::filesystem::path& path);

}  // namespace advtext
