#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "raspref/errors.hpp"

// Exact brute-force cosine index. The stores this backs hold a few hundred
// records, so an exact scan is both the simplest and the fastest-to-verify
// choice. Ties are broken by insertion order to keep runs reproducible.

namespace raspref {

class EmbeddingVector {
 public:
  EmbeddingVector() = default;

  explicit EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
    for (double v : values_) {
      if (!std::isfinite(v)) throw OutOfRange("embedding entries must be finite");
    }
  }

  std::size_t dim() const { return values_.size(); }
  const std::vector<double>& values() const { return values_; }

  bool operator==(const EmbeddingVector&) const = default;

 private:
  std::vector<double> values_;
};

struct IndexEntry {
  std::string key;  // trajectory id
  EmbeddingVector vector;
  std::uint64_t insertion_seq = 0;
};

struct SearchHit {
  std::string key;
  double similarity = 0.0;
  std::uint64_t insertion_seq = 0;

  bool operator==(const SearchHit&) const = default;
};

inline double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() == 0 || b.dim() == 0) {
    throw Precondition("cosine_similarity requires non-empty vectors");
  }
  if (a.dim() != b.dim()) {
    throw DimensionMismatch("cosine_similarity: dims " + std::to_string(a.dim()) + " vs " +
                            std::to_string(b.dim()));
  }
  const auto& av = a.values();
  const auto& bv = b.values();
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    dot += av[i] * bv[i];
    na += av[i] * av[i];
    nb += bv[i] * bv[i];
  }
  if (na == 0.0 || nb == 0.0) throw ZeroVector("cosine_similarity: zero-norm vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

// Top-k by cosine similarity, descending; ties go to the earlier insertion.
// Returns min(k, |index|) hits.
inline std::vector<SearchHit> top_k(std::span<const IndexEntry> index, const EmbeddingVector& query,
                                    std::size_t k) {
  if (k == 0) throw Precondition("top_k requires k >= 1");
  std::vector<SearchHit> hits;
  hits.reserve(index.size());
  for (const auto& entry : index) {
    hits.push_back({entry.key, cosine_similarity(entry.vector, query), entry.insertion_seq});
  }
  const std::size_t n = std::min(k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(n), hits.end(),
                    [](const SearchHit& a, const SearchHit& b) {
                      if (a.similarity != b.similarity) return a.similarity > b.similarity;
                      return a.insertion_seq < b.insertion_seq;
                    });
  hits.resize(n);
  return hits;
}

inline std::vector<SearchHit> top_k(const std::vector<IndexEntry>& index,
                                    const EmbeddingVector& query, std::size_t k) {
  return top_k(std::span<const IndexEntry>(index), query, k);
}

}  // namespace raspref
