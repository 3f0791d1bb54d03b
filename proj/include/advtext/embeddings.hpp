#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "advtext/kernels.hpp"
#include "advtext/tensor.hpp"

namespace advtext {

enum class UnkPolicy { kZeroVector, kMeanVector };

struct Neighbor {
  std::string word;
  std::size_t index = 0;
  double cosine = 0.0;
};

// Word vectors with exact nearest-neighbour queries. Immutable after
// construction, so all queries are safe from any thread.
class EmbeddingTable {
 public:
  // Text format: one `word v1 ... vd` per line. The first line fixes d;
  // duplicate words keep their first row.
  static EmbeddingTable load(const std::filesystem::path& path, UnkPolicy unk = UnkPolicy::kZeroVector);
  static EmbeddingTable from_rows(std::vector<std::string> words, Tensor matrix,
                                  UnkPolicy unk = UnkPolicy::kZeroVector);

  void save(const std::filesystem::path& path) const;

  std::size_t dimension() const { return dim_; }
  std::size_t size() const { return words_.size(); }
  UnkPolicy unk_policy() const { return unk_; }

  std::optional<std::size_t> index_of(std::string_view word) const;
  bool contains(std::string_view word) const { return index_of(word).has_value(); }
  const std::string& word(std::size_t index) const { return words_[index]; }
  const std::vector<std::string>& words() const { return words_; }
  std::span<const double> row(std::size_t index) const { return matrix_.row(index); }
  const Tensor& matrix() const { return matrix_; }
  kernels::MatrixView view() const { return {matrix_.data(), size(), dim_}; }

  // In-vocabulary rows are returned bit-exact; OOV words get the unk vector.
  std::vector<double> lookup(std::string_view token) const;
  std::span<const double> unk_vector() const { return unk_vector_; }
  // Stacks lookups into an L x d matrix.
  Tensor embed(std::span<const std::string> tokens) const;

  // Word whose row is closest in Euclidean distance; ties go to the lower row.
  // Throws ContractError when every word is excluded.
  std::size_t nearest_index(std::span<const double> query,
                            const std::unordered_set<std::string>* exclude = nullptr,
                            kernels::Backend backend = kernels::Backend::kParallel) const;
  const std::string& nearest_word(std::span<const double> query,
                                  const std::unordered_set<std::string>* exclude = nullptr,
                                  kernels::Backend backend = kernels::Backend::kParallel) const;

  // Fast path: ||q||^2 - 2 q.e + ||e||^2 with cached row norms. Must agree with
  // nearest_index on non-degenerate queries.
  std::size_t nearest_index_expanded(std::span<const double> query,
                                     const std::unordered_set<std::string>* exclude = nullptr) const;

  // Up to k words other than `word`, by descending cosine, all >= min_cosine.
  // Throws ContractError for an out-of-vocabulary query word or k == 0.
  std::vector<Neighbor> top_k_neighbors(std::string_view word, std::size_t k, double min_cosine,
                                        kernels::Backend backend = kernels::Backend::kParallel) const;

  // SHA-256 over dimension, words and raw row bytes (hex).
  std::string fingerprint() const;

 private:
  EmbeddingTable() = default;
  void finalize();
  std::vector<std::uint8_t> exclusion_mask(const std::unordered_set<std::string>* exclude) const;

  std::size_t dim_ = 0;
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
  Tensor matrix_;
  std::vector<double> row_norms_sq_;
  UnkPolicy unk_ = UnkPolicy::kZeroVector;
  std::vector<double> unk_vector_;
};

}  // namespace advtext
