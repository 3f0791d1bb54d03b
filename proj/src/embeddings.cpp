#include "advtext/embeddings.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

#include "advtext/errors.hpp"

namespace advtext {

namespace {

bool parse_double(std::string_view s, double& out) {
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

}  // namespace

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& path, UnkPolicy unk) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open embedding table " + path.string());
  EmbeddingTable t;
  t.unk_ = unk;
  std::vector<double> values;
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string_view> fields;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    fields.clear();
    std::string_view sv(line);
    std::size_t i = 0;
    while (i < sv.size()) {
      while (i < sv.size() && (sv[i] == ' ' || sv[i] == '\t')) ++i;
      const std::size_t start = i;
      while (i < sv.size() && sv[i] != ' ' && sv[i] != '\t') ++i;
      if (i > start) fields.push_back(sv.substr(start, i - start));
    }
    if (fields.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (fields.size() < 2) throw FormatError(where + ": expected a word followed by values");
    const std::size_t d = fields.size() - 1;
    if (t.dim_ == 0) {
      t.dim_ = d;
    } else if (d != t.dim_) {
      throw FormatError(where + ": expected " + std::to_string(t.dim_) + " values, found " +
                        std::to_string(d));
    }
    std::string word(fields[0]);
    if (t.index_.contains(word)) continue;
    for (std::size_t k = 1; k < fields.size(); ++k) {
      double v = 0.0;
      if (!parse_double(fields[k], v)) {
        throw FormatError(where + ": non-numeric component '" + std::string(fields[k]) + "'");
      }
      values.push_back(v);
    }
    t.index_.emplace(word, t.words_.size());
    t.words_.push_back(std::move(word));
  }
  if (t.words_.empty()) throw FormatError(path.string() + ": empty embedding table");
  t.matrix_ = Tensor::matrix(t.words_.size(), t.dim_, std::move(values));
  t.finalize();
  return t;
}

EmbeddingTable EmbeddingTable::from_rows(std::vector<std::string> words, Tensor matrix, UnkPolicy unk) {
  if (matrix.rank() != 2 || matrix.rows() != words.size() || words.empty()) {
    throw DimensionError("embedding matrix " + shape_string(matrix.shape()) + " does not match " +
                         std::to_string(words.size()) + " words");
  }
  if (!matrix.all_finite()) throw FormatError("embedding matrix has non-finite values");
  EmbeddingTable t;
  t.unk_ = unk;
  t.dim_ = matrix.cols();
  std::vector<double> values;
  for (std::size_t r = 0; r < words.size(); ++r) {
    if (t.index_.contains(words[r])) continue;
    t.index_.emplace(words[r], t.words_.size());
    t.words_.push_back(words[r]);
    const auto row = matrix.row(r);
    values.insert(values.end(), row.begin(), row.end());
  }
  t.matrix_ = Tensor::matrix(t.words_.size(), t.dim_, std::move(values));
  t.finalize();
  return t;
}

void EmbeddingTable::finalize() {
  row_norms_sq_.assign(size(), 0.0);
  for (std::size_t r = 0; r < size(); ++r) {
    double acc = 0.0;
    for (double v : row(r)) acc += v * v;
    row_norms_sq_[r] = acc;
  }
  unk_vector_.assign(dim_, 0.0);
  if (unk_ == UnkPolicy::kMeanVector) {
    for (std::size_t r = 0; r < size(); ++r) {
      const auto rv = row(r);
      for (std::size_t c = 0; c < dim_; ++c) unk_vector_[c] += rv[c];
    }
    for (double& v : unk_vector_) v /= static_cast<double>(size());
  }
}

void EmbeddingTable::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  char buf[32];
  for (std::size_t r = 0; r < size(); ++r) {
    out << words_[r];
    for (double v : row(r)) {
      std::snprintf(buf, sizeof buf, " %.17g", v);
      out << buf;
    }
    out << '\n';
  }
}

std::optional<std::size_t> EmbeddingTable::index_of(std::string_view word) const {
  const auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<double> EmbeddingTable::lookup(std::string_view token) const {
  if (const auto idx = index_of(token)) {
    const auto r = row(*idx);
    return {r.begin(), r.end()};
  }
  return unk_vector_;
}

Tensor EmbeddingTable::embed(std::span<const std::string> tokens) const {
  Tensor out({tokens.size(), dim_});
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto idx = index_of(tokens[i]);
    const auto src = idx ? row(*idx) : std::span<const double>(unk_vector_);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

std::vector<std::uint8_t> EmbeddingTable::exclusion_mask(const std::unordered_set<std::string>* exclude) const {
  std::vector<std::uint8_t> mask;
  if (exclude == nullptr || exclude->empty()) return mask;
  mask.assign(size(), 0);
  for (const std::string& w : *exclude) {
    if (const auto idx = index_of(w)) mask[*idx] = 1;
  }
  return mask;
}

std::size_t EmbeddingTable::nearest_index(std::span<const double> query,
                                          const std::unordered_set<std::string>* exclude,
                                          kernels::Backend backend) const {
  if (query.size() != dim_) {
    throw DimensionError("query has " + std::to_string(query.size()) + " values, table dimension is " +
                         std::to_string(dim_));
  }
  const auto mask = exclusion_mask(exclude);
  const std::size_t best = kernels::nearest_row(backend, view(), query, mask);
  if (best == kernels::kNoRow) throw ContractError("nearest_word: every vocabulary word is excluded");
  return best;
}

const std::string& EmbeddingTable::nearest_word(std::span<const double> query,
                                                const std::unordered_set<std::string>* exclude,
                                                kernels::Backend backend) const {
  return words_[nearest_index(query, exclude, backend)];
}

std::size_t EmbeddingTable::nearest_index_expanded(std::span<const double> query,
                                                   const std::unordered_set<std::string>* exclude) const {
  if (query.size() != dim_) {
    throw DimensionError("query has " + std::to_string(query.size()) + " values, table dimension is " +
                         std::to_string(dim_));
  }
  const auto mask = exclusion_mask(exclude);
  std::vector<double> dots(size());
  kernels::row_dots(kernels::Backend::kParallel, view(), query, dots);
  double qn = 0.0;
  for (double v : query) qn += v * v;
  std::size_t best = kernels::kNoRow;
  double best_dist = 0.0;
  for (std::size_t r = 0; r < size(); ++r) {
    if (!mask.empty() && mask[r]) continue;
    const double dist = qn - 2.0 * dots[r] + row_norms_sq_[r];
    if (best == kernels::kNoRow || dist < best_dist) {
      best = r;
      best_dist = dist;
    }
  }
  if (best == kernels::kNoRow) throw ContractError("nearest_word: every vocabulary word is excluded");
  return best;
}

std::vector<Neighbor> EmbeddingTable::top_k_neighbors(std::string_view word, std::size_t k, double min_cosine,
                                                      kernels::Backend backend) const {
  if (k == 0) throw ContractError("top_k_neighbors needs k >= 1");
  const auto qi = index_of(word);
  if (!qi) throw ContractError("top_k_neighbors: unknown word '" + std::string(word) + "'");
  std::vector<double> dots(size());
  kernels::row_dots(backend, view(), row(*qi), dots);
  const double qn = std::sqrt(row_norms_sq_[*qi]);
  std::vector<Neighbor> cands;
  for (std::size_t r = 0; r < size(); ++r) {
    if (r == *qi) continue;
    const double denom = qn * std::sqrt(row_norms_sq_[r]);
    const double cosine = denom > 0.0 ? dots[r] / denom : 0.0;
    if (cosine >= min_cosine) cands.push_back({words_[r], r, cosine});
  }
  std::stable_sort(cands.begin(), cands.end(),
                   [](const Neighbor& a, const Neighbor& b) { return a.cosine > b.cosine; });
  if (cands.size() > k) cands.resize(k);
  return cands;
}

std::string EmbeddingTable::fingerprint() const {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
  const std::uint64_t d = dim_;
  EVP_DigestUpdate(ctx.get(), &d, sizeof d);
  for (const std::string& w : words_) {
    EVP_DigestUpdate(ctx.get(), w.data(), w.size());
    EVP_DigestUpdate(ctx.get(), "\n", 1);
  }
  EVP_DigestUpdate(ctx.get(), matrix_.data().data(), matrix_.size() * sizeof(double));
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xF];
  }
  return out;
}

}  // namespace advtext
