#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "advtext/types.hpp"

namespace advtext::corpus {

enum class Split { kTrain, kDev, kTest };

std::string to_string(Split s);

struct RawReview {
  std::string id;
  std::string text;
  std::optional<int> rating;
  std::optional<Label> label;
};

struct Example {
  std::string id;
  std::vector<std::string> tokens;
  Label label = Label::kNegative;
  Split split = Split::kTrain;
};

struct DatasetSpec {
  std::string name;
  std::optional<std::size_t> max_tokens;  // nullopt = unlimited
  std::array<double, 3> split_fractions{0.9, 0.05, 0.05};
  std::uint64_t seed = 0;

  // Throws ContractError unless the fractions are non-negative and sum to 1.
  void validate() const;
};

// Ratings >= 4 are positive, <= 2 negative and 3 is discarded. Pre-binarised
// labels pass through unchanged.
std::optional<Label> binarize(const RawReview& raw);

// Deterministic rule tokenizer: ASCII-lowercases, splits on Unicode
// whitespace and detaches leading/trailing runs of ASCII punctuation as
// their own tokens.
std::vector<std::string> tokenize(std::string_view text);

std::vector<Example> filter_by_length(std::span<const Example> examples, std::size_t max_tokens);

struct SplitResult {
  std::vector<Example> train;
  std::vector<Example> dev;
  std::vector<Example> test;
};

// Seeded shuffle followed by largest-remainder allocation of the split sizes.
SplitResult split(std::span<const Example> examples, const DatasetSpec& spec);

// Sizes the three splits would receive for `n` examples.
std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3>& fractions);

// Parses "90,5,5" or "0.9,0.05,0.05" into fractions summing to 1.
std::array<double, 3> parse_split_fractions(std::string_view text);

// JSON-lines I/O. Review lines carry {id, text, rating|label}; example lines
// carry {id, tokens, label}.
std::vector<RawReview> read_reviews(const std::filesystem::path& path);
RawReview parse_review(std::string_view json_line, std::size_t line_no = 0);
std::vector<Example> read_examples(const std::filesystem::path& path, Split split = Split::kTrain);
void write_examples(const std::filesystem::path& path, std::span<const Example> examples);

struct BuildSummary {
  std::size_t read = 0;
  std::size_t discarded_neutral = 0;
  std::size_t discarded_empty = 0;
  std::size_t discarded_long = 0;
  std::array<std::size_t, 3> sizes{};
};

// The `corpus build` pipeline: read, binarize, tokenize, filter, split, and
// write train/dev/test JSON-lines plus a {id, split} manifest into `out_dir`.
BuildSummary build(const std::filesystem::path& input, const DatasetSpec& spec,
                   const std::filesystem::path& out_dir);

// Loads train.jsonl / dev.jsonl / test.jsonl from a built directory.
SplitResult load_splits(const std::filesystem::path& dir);

}  // namespace advtext::corpus
