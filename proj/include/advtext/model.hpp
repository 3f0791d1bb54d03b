#pragma once

// Interfaces the attacks consume. Black-box attacks receive a ScoreModel and
// can only ask for prediction scores; white-box attacks receive a
// GradientModel which additionally works directly in embedding space.

#include <span>
#include <string>

#include "advtext/embeddings.hpp"
#include "advtext/tensor.hpp"
#include "advtext/types.hpp"

namespace advtext {

class ScoreModel {
 public:
  virtual ~ScoreModel() = default;
  // Throws ContractError on an empty token sequence.
  virtual Prediction predict(std::span<const std::string> tokens) const = 0;
};

// A scalar objective and its gradient with respect to each input embedding row.
struct ValueGradient {
  double value = 0.0;
  Tensor gradient;  // L x d
};

class GradientModel : public ScoreModel {
 public:
  virtual const EmbeddingTable& embeddings() const = 0;
  // `rows` is an L x d matrix of input embeddings.
  virtual Prediction predict_embedded(const Tensor& rows) const = 0;
  // Cross-entropy of `label` and its input gradient.
  virtual ValueGradient loss_gradient(const Tensor& rows, Label label) const = 0;
  // logit(label) - logit(other label) and its input gradient.
  virtual ValueGradient margin_gradient(const Tensor& rows, Label label) const = 0;

  Prediction predict(std::span<const std::string> tokens) const override;
};

}  // namespace advtext
