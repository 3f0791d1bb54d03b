#include "advtext/tensor.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include "advtext/errors.hpp"
#include "advtext/types.hpp"

namespace advtext {

std::string to_string(Label l) { return l == Label::kPositive ? "positive" : "negative"; }

Label parse_label(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "positive" || lower == "pos" || lower == "1") return Label::kPositive;
  if (lower == "negative" || lower == "neg" || lower == "0") return Label::kNegative;
  throw FormatError("unrecognised label '" + std::string(text) + "'");
}

Prediction make_prediction(double negative_logit, double positive_logit) {
  Prediction p;
  p.logits = {negative_logit, positive_logit};
  const double m = std::max(negative_logit, positive_logit);
  const double en = std::exp(negative_logit - m);
  const double ep = std::exp(positive_logit - m);
  const double z = en + ep;
  p.probabilities = {en / z, ep / z};
  p.label = positive_logit > negative_logit ? Label::kPositive : Label::kNegative;
  return p;
}

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (numel(shape_) != data_.size()) {
    throw DimensionError("shape " + shape_string(shape_) + " needs " +
                         std::to_string(numel(shape_)) + " values, got " +
                         std::to_string(data_.size()));
  }
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
  return Tensor(Shape{rows, cols}, std::move(data));
}

std::size_t Tensor::rows() const {
  return shape_.size() == 2 ? shape_[0] : 1;
}

std::size_t Tensor::cols() const {
  if (shape_.size() == 2) return shape_[1];
  if (shape_.size() == 1) return shape_[0];
  return 1;
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw ContractError("item() on tensor of shape " + shape_string(shape_));
  }
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double Tensor::l2_norm() const {
  double acc = 0.0;
  for (double v : data_) acc += v * v;
  return std::sqrt(acc);
}

}  // namespace advtext
