#pragma once

// Pluggable sentence encoder and language model used by the metrics and by
// TextFooler's similarity constraint.

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "advtext/embeddings.hpp"

namespace advtext {

class SentenceEncoder {
 public:
  virtual ~SentenceEncoder() = default;
  // Unit-norm encoding; the zero vector when the input has no usable signal.
  virtual std::vector<double> encode(std::span<const std::string> tokens) const = 0;
};

class LanguageModel {
 public:
  virtual ~LanguageModel() = default;
  // Natural-log probability of the whole sentence, including the end marker.
  virtual double log_prob(std::span<const std::string> tokens) const = 0;
};

// L2-normalised mean of word vectors.
class MeanEmbeddingEncoder final : public SentenceEncoder {
 public:
  explicit MeanEmbeddingEncoder(std::shared_ptr<const EmbeddingTable> table) : table_(std::move(table)) {}
  std::vector<double> encode(std::span<const std::string> tokens) const override;

 private:
  std::shared_ptr<const EmbeddingTable> table_;
};

// Cosine similarity; 0 when either vector is zero.
double cosine_or_zero(std::span<const double> a, std::span<const double> b);

}  // namespace advtext
