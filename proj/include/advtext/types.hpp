#pragma once

#include <array>
#include <string>
#include <string_view>

namespace advtext {

enum class Label { kNegative = 0, kPositive = 1 };

inline constexpr Label other(Label l) {
  return l == Label::kPositive ? Label::kNegative : Label::kPositive;
}

inline constexpr std::size_t index_of(Label l) { return static_cast<std::size_t>(l); }

std::string to_string(Label l);
// Accepts "positive"/"negative" (any case), "pos"/"neg" and "1"/"0".
Label parse_label(std::string_view text);

struct Prediction {
  Label label = Label::kNegative;
  std::array<double, 2> probabilities{0.5, 0.5};
  std::array<double, 2> logits{0.0, 0.0};

  double probability(Label l) const { return probabilities[index_of(l)]; }
  double logit(Label l) const { return logits[index_of(l)]; }
};

// Softmax over two logits; ties resolve to Negative.
Prediction make_prediction(double negative_logit, double positive_logit);

}  // namespace advtext
