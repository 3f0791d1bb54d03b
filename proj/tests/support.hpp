#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <unistd.h>

#include "advtext/classifier.hpp"
#include "advtext/embeddings.hpp"
#include "advtext/model.hpp"
#include "advtext/synthetic.hpp"
#include "advtext/tensor.hpp"

namespace test {

using namespace advtext;

inline Tensor random_tensor(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Tensor t({rows, cols});
  for (double& v : t.values()) v = normal(rng);
  return t;
}

// |a - n| <= max(1e-4 * max(|a|, |n|), 1e-8)
inline bool grad_close(double analytic, double numeric, double rel = 1e-4, double floor = 1e-8) {
  return std::abs(analytic - numeric) <= std::max(rel * std::max(std::abs(analytic), std::abs(numeric)), floor);
}

// Central differences of f over every entry of x.
template <typename F>
Tensor numeric_gradient(F&& f, Tensor x, double h = 1e-4) {
  Tensor g = Tensor::zeros_like(x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f(x);
    x[i] = saved - h;
    const double down = f(x);
    x[i] = saved;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

inline std::size_t count_mismatches(const Tensor& analytic, const Tensor& numeric) {
  std::size_t bad = 0;
  for (std::size_t i = 0; i < analytic.size(); ++i) bad += !grad_close(analytic[i], numeric[i]);
  return bad;
}

inline std::shared_ptr<const EmbeddingTable> random_table(std::size_t vocab, std::size_t dim, std::uint64_t seed,
                                                          const std::string& prefix = "w") {
  std::mt19937_64 rng(seed);
  std::vector<std::string> words;
  for (std::size_t i = 0; i < vocab; ++i) words.push_back(prefix + std::to_string(i));
  return std::make_shared<const EmbeddingTable>(EmbeddingTable::from_rows(words, random_tensor(vocab, dim, rng)));
}

// Positive logit w . sum(rows) + b, negative logit 0. With `linear_loss`
// the loss is the negated margin instead of cross-entropy.
class LinearModel final : public GradientModel {
 public:
  LinearModel(std::shared_ptr<const EmbeddingTable> table, std::vector<double> w, double b, bool linear_loss = false)
      : table_(std::move(table)), w_(std::move(w)), b_(b), linear_loss_(linear_loss) {}

  const EmbeddingTable& embeddings() const override { return *table_; }

  double score(const Tensor& rows) const {
    double s = b_;
    for (std::size_t r = 0; r < rows.rows(); ++r) {
      for (std::size_t c = 0; c < rows.cols(); ++c) s += w_[c] * rows.at(r, c);
    }
    return s;
  }

  Prediction predict_embedded(const Tensor& rows) const override { return make_prediction(0.0, score(rows)); }

  ValueGradient loss_gradient(const Tensor& rows, Label label) const override {
    if (linear_loss_) {
      ValueGradient m = margin_gradient(rows, label);
      m.value = -m.value;
      for (double& g : m.gradient.values()) g = -g;
      return m;
    }
    const Prediction p = predict_embedded(rows);
    const double y = label == Label::kPositive ? 1.0 : 0.0;
    ValueGradient out{-std::log(p.probability(label)), Tensor::zeros_like(rows)};
    for (std::size_t r = 0; r < rows.rows(); ++r) {
      for (std::size_t c = 0; c < rows.cols(); ++c) out.gradient.at(r, c) = (p.probabilities[1] - y) * w_[c];
    }
    return out;
  }

  ValueGradient margin_gradient(const Tensor& rows, Label label) const override {
    const double sign = label == Label::kPositive ? 1.0 : -1.0;
    ValueGradient out{sign * score(rows), Tensor::zeros_like(rows)};
    for (std::size_t r = 0; r < rows.rows(); ++r) {
      for (std::size_t c = 0; c < rows.cols(); ++c) out.gradient.at(r, c) = sign * w_[c];
    }
    return out;
  }

 private:
  std::shared_ptr<const EmbeddingTable> table_;
  std::vector<double> w_;
  double b_;
  bool linear_loss_;
};

// Forwards predictions to `inner` and counts them; any gradient access is
// recorded as a violation.
class ForbiddenGradientModel final : public GradientModel {
 public:
  explicit ForbiddenGradientModel(const GradientModel& inner) : inner_(inner) {}

  Prediction predict(std::span<const std::string> tokens) const override {
    ++predictions;
    return inner_.predict(tokens);
  }
  const EmbeddingTable& embeddings() const override {
    ++violations;
    return inner_.embeddings();
  }
  Prediction predict_embedded(const Tensor& rows) const override {
    ++violations;
    return inner_.predict_embedded(rows);
  }
  ValueGradient loss_gradient(const Tensor& rows, Label label) const override {
    ++violations;
    return inner_.loss_gradient(rows, label);
  }
  ValueGradient margin_gradient(const Tensor& rows, Label label) const override {
    ++violations;
    return inner_.margin_gradient(rows, label);
  }

  mutable std::atomic<std::size_t> predictions{0};
  mutable std::atomic<std::size_t> violations{0};

 private:
  const GradientModel& inner_;
};

// Small synthetic corpus with a trained CNN, shared by the attack and
// harness tests.
struct TinyWorld {
  synthetic::SyntheticData data;
  std::unique_ptr<Classifier> cnn;
};

inline const TinyWorld& tiny_world() {
  static const TinyWorld world = [] {
    synthetic::SyntheticSpec spec;
    spec.n_examples = 2000;
    spec.n_polarity = 6;
    spec.n_neutral = 48;
    spec.dimension = 16;
    spec.seed = 11;
    TinyWorld w{synthetic::generate(spec), nullptr};
    ClassifierConfig config;
    config.architecture = Architecture::kCnn;
    config.filter_widths = {2, 3};
    config.filters_per_width = 16;
    config.max_epochs = 40;
    config.early_stop_patience = 8;
    config.learning_rate = 1e-2;
    config.seed = 5;
    w.cnn = std::make_unique<Classifier>(
        train(Classifier(config, w.data.embeddings), w.data.splits.train, w.data.splits.dev));
    return w;
  }();
  return world;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("advtext-test-" + name + "-" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace test
