#pragma once

// Generated polarity corpus with a known labelling rule: every sentence
// carries one to three polarity words of its class among neutral fillers.

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "advtext/corpus.hpp"
#include "advtext/embeddings.hpp"
#include "advtext/pos_tagger.hpp"

namespace advtext::synthetic {

struct SyntheticSpec {
  std::size_t n_examples = 5000;
  std::size_t n_polarity = 20;       // per class
  std::size_t n_neutral = 160;
  std::size_t neighbors_per_polarity = 3;  // counter-fitted synonyms, drawn from the neutral words
  std::size_t min_length = 6;
  std::size_t max_length = 14;
  std::size_t dimension = 50;
  double embedding_scale = 0.4;
  double synonym_noise = 0.6;
  std::array<double, 3> split_fractions{0.8, 0.1, 0.1};
  std::uint64_t seed = 1;
};

struct SyntheticData {
  std::vector<std::string> positive;
  std::vector<std::string> negative;
  std::vector<std::string> neutral;
  corpus::SplitResult splits;
  std::shared_ptr<const EmbeddingTable> embeddings;
  std::shared_ptr<const EmbeddingTable> counterfit;
  PosTagger tagger;
};

SyntheticData generate(const SyntheticSpec& spec = {});

// Writes train/dev/test.jsonl, manifest.jsonl, embeddings.txt,
// counterfit.txt and pos.txt.
void write(const SyntheticData& data, const std::filesystem::path& dir);

}  // namespace advtext::synthetic
