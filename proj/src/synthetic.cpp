#include "advtext/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "advtext/errors.hpp"

namespace advtext::synthetic {

namespace {

std::string name(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%03zu", prefix, i);
  return buf;
}

std::vector<double> gaussian(std::mt19937_64& rng, std::size_t d, double scale) {
  std::normal_distribution<double> normal(0.0, scale);
  std::vector<double> v(d);
  for (double& x : v) x = normal(rng);
  return v;
}

std::vector<double> unit(std::vector<double> v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  for (double& x : v) x /= n;
  return v;
}

std::size_t uniform(std::mt19937_64& rng, std::size_t bound) { return static_cast<std::size_t>(rng() % bound); }

}  // namespace

SyntheticData generate(const SyntheticSpec& spec) {
  if (spec.n_polarity == 0 || spec.min_length < 3 || spec.max_length < spec.min_length || spec.dimension == 0) {
    throw ContractError("invalid synthetic corpus spec");
  }
  if (spec.n_neutral < 2 * spec.n_polarity * spec.neighbors_per_polarity) {
    throw ContractError("not enough neutral words for the requested synonyms");
  }
  std::mt19937_64 rng(spec.seed);
  SyntheticData data;
  for (std::size_t i = 0; i < spec.n_polarity; ++i) data.positive.push_back(name("pos", i));
  for (std::size_t i = 0; i < spec.n_polarity; ++i) data.negative.push_back(name("neg", i));
  for (std::size_t i = 0; i < spec.n_neutral; ++i) data.neutral.push_back(name("neu", i));

  std::vector<std::string> words = data.positive;
  words.insert(words.end(), data.negative.begin(), data.negative.end());
  words.insert(words.end(), data.neutral.begin(), data.neutral.end());
  const std::size_t d = spec.dimension;

  std::vector<double> glove;
  for (std::size_t i = 0; i < words.size(); ++i) {
    const std::vector<double> v = gaussian(rng, d, spec.embedding_scale);
    glove.insert(glove.end(), v.begin(), v.end());
  }

  // Counter-fitted space: each polarity word anchors a cluster of neutral
  // synonyms; the remaining neutral words are isolated.
  std::vector<std::vector<double>> cf(words.size());
  const std::size_t n_pol = 2 * spec.n_polarity;
  std::size_t next_neutral = n_pol;
  for (std::size_t p = 0; p < n_pol; ++p) {
    const std::vector<double> anchor = unit(gaussian(rng, d, 1.0));
    cf[p] = anchor;
    data.tagger.add(words[p], CoarseTag::kAdj);
    for (std::size_t k = 0; k < spec.neighbors_per_polarity; ++k, ++next_neutral) {
      const std::vector<double> noise = unit(gaussian(rng, d, 1.0));
      std::vector<double> v(d);
      for (std::size_t c = 0; c < d; ++c) v[c] = anchor[c] + spec.synonym_noise * noise[c];
      cf[next_neutral] = unit(v);
      data.tagger.add(words[next_neutral], CoarseTag::kAdj);
    }
  }
  for (std::size_t i = next_neutral; i < words.size(); ++i) {
    cf[i] = unit(gaussian(rng, d, 1.0));
    data.tagger.add(words[i], (i % 2 == 0) ? CoarseTag::kNoun : CoarseTag::kVerb);
  }
  std::vector<double> cf_flat;
  for (const auto& v : cf) cf_flat.insert(cf_flat.end(), v.begin(), v.end());

  data.embeddings = std::make_shared<const EmbeddingTable>(
      EmbeddingTable::from_rows(words, Tensor::matrix(words.size(), d, std::move(glove))));
  data.counterfit = std::make_shared<const EmbeddingTable>(
      EmbeddingTable::from_rows(words, Tensor::matrix(words.size(), d, std::move(cf_flat))));

  std::vector<corpus::Example> examples;
  examples.reserve(spec.n_examples);
  for (std::size_t n = 0; n < spec.n_examples; ++n) {
    corpus::Example e;
    e.id = name("syn", n);
    e.label = (rng() & 1) != 0 ? Label::kPositive : Label::kNegative;
    const std::size_t len = spec.min_length + uniform(rng, spec.max_length - spec.min_length + 1);
    const std::size_t roll = uniform(rng, 100);
    const std::size_t n_polar = roll < 60 ? 1 : roll < 85 ? 2 : 3;
    const auto& pool = e.label == Label::kPositive ? data.positive : data.negative;
    e.tokens.resize(len);
    for (auto& t : e.tokens) t = data.neutral[uniform(rng, data.neutral.size())];
    std::vector<std::size_t> positions(len);
    for (std::size_t i = 0; i < len; ++i) positions[i] = i;
    for (std::size_t i = 0; i < n_polar; ++i) {
      std::swap(positions[i], positions[i + uniform(rng, len - i)]);
      e.tokens[positions[i]] = pool[uniform(rng, pool.size())];
    }
    examples.push_back(std::move(e));
  }
  corpus::DatasetSpec ds;
  ds.name = "synthetic";
  ds.split_fractions = spec.split_fractions;
  ds.seed = spec.seed;
  data.splits = corpus::split(examples, ds);
  return data;
}

void write(const SyntheticData& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  corpus::write_examples(dir / "train.jsonl", data.splits.train);
  corpus::write_examples(dir / "dev.jsonl", data.splits.dev);
  corpus::write_examples(dir / "test.jsonl", data.splits.test);
  std::ofstream manifest(dir / "manifest.jsonl");
  for (const auto* part : {&data.splits.train, &data.splits.dev, &data.splits.test}) {
    for (const auto& e : *part) {
      manifest << "{\"id\":\"" << e.id << "\",\"split\":\"" << corpus::to_string(e.split) << "\"}\n";
    }
  }
  data.embeddings->save(dir / "embeddings.txt");
  data.counterfit->save(dir / "counterfit.txt");
  std::ofstream pos(dir / "pos.txt");
  for (const std::string& w : data.embeddings->words()) pos << w << ' ' << to_string(data.tagger.tag(w)) << '\n';
}

}  // namespace advtext::synthetic
