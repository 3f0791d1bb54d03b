#include "advtext/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "advtext/errors.hpp"

namespace advtext::corpus {

using nlohmann::json;

std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kDev: return "dev";
    case Split::kTest: return "test";
  }
  return "train";
}

void DatasetSpec::validate() const {
  double sum = 0.0;
  for (double f : split_fractions) {
    if (!(f >= 0.0)) throw ContractError("split fractions must be non-negative");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ContractError("split fractions sum to " + std::to_string(sum) + ", expected 1");
  }
  if (max_tokens && *max_tokens == 0) throw ContractError("max_tokens must be at least 1");
}

std::optional<Label> binarize(const RawReview& raw) {
  if (raw.rating.has_value() == raw.label.has_value()) {
    throw FormatError("review '" + raw.id + "' must carry exactly one of rating or label");
  }
  if (raw.label) return raw.label;
  const int r = *raw.rating;
  if (r < 1 || r > 5) {
    throw FormatError("review '" + raw.id + "' has rating " + std::to_string(r) + " outside 1..5");
  }
  if (r >= 4) return Label::kPositive;
  if (r <= 2) return Label::kNegative;
  return std::nullopt;
}

namespace {

bool is_ascii_punct(unsigned char c) {
  return (c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) ||
         (c >= 123 && c <= 126);
}

bool is_unicode_space(char32_t cp) {
  return (cp >= 0x09 && cp <= 0x0D) || cp == 0x20 || cp == 0x85 || cp == 0xA0 || cp == 0x1680 ||
         (cp >= 0x2000 && cp <= 0x200A) || cp == 0x2028 || cp == 0x2029 || cp == 0x202F ||
         cp == 0x205F || cp == 0x3000;
}

// Decodes one code point at text[i]; returns its byte length. Invalid
// sequences decode as a single byte so they never count as whitespace.
std::size_t decode(std::string_view text, std::size_t i, char32_t& cp) {
  const auto b0 = static_cast<unsigned char>(text[i]);
  std::size_t len = 1;
  if (b0 < 0x80) {
    cp = b0;
    return 1;
  }
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    cp = 0xFFFD;
    return 1;
  }
  if (i + len > text.size()) {
    cp = 0xFFFD;
    return 1;
  }
  for (std::size_t k = 1; k < len; ++k) {
    const auto b = static_cast<unsigned char>(text[i + k]);
    if ((b & 0xC0) != 0x80) {
      cp = 0xFFFD;
      return 1;
    }
    cp = (cp << 6) | (b & 0x3F);
  }
  return len;
}

void emit_chunk(std::string chunk, std::vector<std::string>& out) {
  if (chunk.empty()) return;
  for (char& c : chunk) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  std::size_t lead = 0;
  while (lead < chunk.size() && is_ascii_punct(static_cast<unsigned char>(chunk[lead]))) ++lead;
  if (lead == chunk.size()) {
    out.push_back(std::move(chunk));
    return;
  }
  std::size_t trail = chunk.size();
  while (trail > lead && is_ascii_punct(static_cast<unsigned char>(chunk[trail - 1]))) --trail;
  if (lead > 0) out.push_back(chunk.substr(0, lead));
  out.push_back(chunk.substr(lead, trail - lead));
  if (trail < chunk.size()) out.push_back(chunk.substr(trail));
}

std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) { return rng() % bound; }

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string chunk;
  std::size_t i = 0;
  while (i < text.size()) {
    char32_t cp = 0;
    const std::size_t len = decode(text, i, cp);
    if (is_unicode_space(cp)) {
      emit_chunk(std::move(chunk), out);
      chunk.clear();
    } else {
      chunk.append(text.substr(i, len));
    }
    i += len;
  }
  emit_chunk(std::move(chunk), out);
  return out;
}

std::vector<Example> filter_by_length(std::span<const Example> examples, std::size_t max_tokens) {
  if (max_tokens == 0) throw ContractError("max_tokens must be at least 1");
  std::vector<Example> out;
  for (const Example& e : examples) {
    if (e.tokens.size() <= max_tokens) out.push_back(e);
  }
  return out;
}

std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3>& fractions) {
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> remainders{};
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    const double quota = static_cast<double>(n) * fractions[k];
    // A small slack keeps quotas like 100 * 0.05 from flooring to 4.
    const double fl = std::floor(quota + 1e-9);
    sizes[k] = static_cast<std::size_t>(fl);
    remainders[k] = quota - fl;
    assigned += sizes[k];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b] + 1e-9; });
  for (std::size_t k = 0; assigned < n; k = (k + 1) % 3, ++assigned) sizes[order[k]] += 1;
  return sizes;
}

SplitResult split(std::span<const Example> examples, const DatasetSpec& spec) {
  spec.validate();
  std::vector<std::size_t> idx(examples.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(spec.seed);
  for (std::size_t i = idx.size(); i > 1; --i) {
    std::swap(idx[i - 1], idx[bounded(rng, i)]);
  }
  const auto sizes = split_sizes(examples.size(), spec.split_fractions);
  SplitResult out;
  std::size_t pos = 0;
  const std::array<Split, 3> tags{Split::kTrain, Split::kDev, Split::kTest};
  std::array<std::vector<Example>*, 3> dest{&out.train, &out.dev, &out.test};
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t c = 0; c < sizes[k]; ++c, ++pos) {
      Example e = examples[idx[pos]];
      e.split = tags[k];
      dest[k]->push_back(std::move(e));
    }
  }
  return out;
}

std::array<double, 3> parse_split_fractions(std::string_view text) {
  std::array<double, 3> raw{};
  std::size_t k = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const std::string part(text.substr(start, comma == std::string_view::npos ? text.npos : comma - start));
    if (k >= 3) throw ContractError("expected three split fractions, got more in '" + std::string(text) + "'");
    try {
      std::size_t used = 0;
      raw[k++] = std::stod(part, &used);
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw ContractError("bad split fraction '" + part + "'");
    }
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (k != 3) throw ContractError("expected three split fractions in '" + std::string(text) + "'");
  const double sum = raw[0] + raw[1] + raw[2];
  if (!(sum > 0.0)) throw ContractError("split fractions must sum to a positive value");
  // Accept both percentages (summing to 100) and fractions (summing to 1).
  if (std::abs(sum - 100.0) > 1e-9 && std::abs(sum - 1.0) > 1e-9) {
    throw ContractError("split fractions must sum to 1 or 100");
  }
  for (double& f : raw) f /= sum;
  return raw;
}

RawReview parse_review(std::string_view json_line, std::size_t line_no) {
  const std::string where = " (line " + std::to_string(line_no) + ")";
  json j;
  try {
    j = json::parse(json_line);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("invalid JSON") + where + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("id") || !j.contains("text")) {
    throw FormatError("review needs id and text" + where);
  }
  RawReview r;
  r.id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
  if (!j["text"].is_string()) throw FormatError("text must be a string" + where);
  r.text = j["text"].get<std::string>();
  const bool has_rating = j.contains("rating") && !j["rating"].is_null();
  const bool has_label = j.contains("label") && !j["label"].is_null();
  if (has_rating == has_label) {
    throw FormatError("review '" + r.id + "' must carry exactly one of rating or label" + where);
  }
  if (has_rating) {
    if (!j["rating"].is_number_integer()) throw FormatError("rating must be an integer" + where);
    r.rating = j["rating"].get<int>();
    if (*r.rating < 1 || *r.rating > 5) {
      throw FormatError("rating " + std::to_string(*r.rating) + " outside 1..5" + where);
    }
  } else {
    const json& l = j["label"];
    r.label = parse_label(l.is_string() ? l.get<std::string>() : l.dump());
  }
  return r;
}

std::vector<RawReview> read_reviews(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<RawReview> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_review(line, line_no));
  }
  return out;
}

std::vector<Example> read_examples(const std::filesystem::path& path, Split split) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<Example> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      Example e;
      e.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
      e.tokens = j.at("tokens").get<std::vector<std::string>>();
      const json& l = j.at("label");
      e.label = parse_label(l.is_string() ? l.get<std::string>() : l.dump());
      e.split = split;
      if (e.tokens.empty()) throw FormatError("empty token list");
      out.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return out;
}

void write_examples(const std::filesystem::path& path, std::span<const Example> examples) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  for (const Example& e : examples) {
    out << json{{"id", e.id}, {"tokens", e.tokens}, {"label", to_string(e.label)}}.dump() << '\n';
  }
}

BuildSummary build(const std::filesystem::path& input, const DatasetSpec& spec,
                   const std::filesystem::path& out_dir) {
  spec.validate();
  BuildSummary summary;
  std::vector<Example> examples;
  for (const RawReview& raw : read_reviews(input)) {
    ++summary.read;
    const auto label = binarize(raw);
    if (!label) {
      ++summary.discarded_neutral;
      continue;
    }
    Example e{raw.id, tokenize(raw.text), *label, Split::kTrain};
    if (e.tokens.empty()) {
      ++summary.discarded_empty;
      continue;
    }
    examples.push_back(std::move(e));
  }
  if (spec.max_tokens) {
    const std::size_t before = examples.size();
    examples = filter_by_length(examples, *spec.max_tokens);
    summary.discarded_long = before - examples.size();
  }
  const SplitResult parts = split(examples, spec);
  summary.sizes = {parts.train.size(), parts.dev.size(), parts.test.size()};

  std::filesystem::create_directories(out_dir);
  write_examples(out_dir / "train.jsonl", parts.train);
  write_examples(out_dir / "dev.jsonl", parts.dev);
  write_examples(out_dir / "test.jsonl", parts.test);
  std::ofstream manifest(out_dir / "manifest.jsonl");
  for (const auto* part : {&parts.train, &parts.dev, &parts.test}) {
    for (const Example& e : *part) {
      manifest << json{{"id", e.id}, {"split", to_string(e.split)}}.dump() << '\n';
    }
  }
  return summary;
}

SplitResult load_splits(const std::filesystem::path& dir) {
  SplitResult out;
  out.train = read_examples(dir / "train.jsonl", Split::kTrain);
  if (std::filesystem::exists(dir / "dev.jsonl")) out.dev = read_examples(dir / "dev.jsonl", Split::kDev);
  if (std::filesystem::exists(dir / "test.jsonl")) out.test = read_examples(dir / "test.jsonl", Split::kTest);
  return out;
}

}  // namespace advtext::corpus
