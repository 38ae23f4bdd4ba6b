#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

// Small text utilities shared by scoring, guideline distillation and the
// scripted embedder. ASCII-only on purpose: traces are model output and the
// overlap measures only need a stable, deterministic notion of "word".

namespace raspref::text {

inline char ascii_lower(char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

inline bool is_word_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
}

// Lowercased alphanumeric tokens; everything else is a separator.
inline std::vector<std::string> tokenize(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (is_word_char(c)) {
      cur.push_back(ascii_lower(c));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline const std::unordered_set<std::string_view>& stop_words() {
  static const std::unordered_set<std::string_view> words = {
      "a",     "an",    "the",   "and",   "or",    "but",   "if",    "then",
      "else",  "of",    "to",    "in",    "on",    "at",    "by",    "for",
      "with",  "as",    "is",    "are",   "was",   "were",  "be",    "been",
      "being", "it",    "its",   "this",  "that",  "these", "those", "i",
      "you",   "he",    "she",   "we",    "they",  "them",  "him",   "his",
      "her",   "their", "our",   "your",  "my",    "me",    "us",    "do",
      "does",  "did",   "done",  "can",   "could", "will",  "would", "shall",
      "should", "may",  "might", "must",  "have",  "has",   "had",   "from",
      "into",  "over",  "under", "there", "here",  "when",  "where", "why",
      "how",   "what",  "which", "who",   "whom",  "so",    "than",  "too",
      "very",  "just",  "also",  "let",   "lets",  "s",     "t"};
  return words;
}

inline bool is_stop_word(std::string_view w) { return stop_words().count(w) > 0; }

// Ordered tokens with stop words removed.
inline std::vector<std::string> content_words(std::string_view s) {
  std::vector<std::string> out;
  for (auto& w : tokenize(s)) {
    if (!is_stop_word(w)) out.push_back(std::move(w));
  }
  return out;
}

inline std::unordered_set<std::string> content_word_set(std::string_view s) {
  std::unordered_set<std::string> out;
  for (auto& w : content_words(s)) out.insert(std::move(w));
  return out;
}

// FNV-1a, used instead of std::hash so results are stable across builds.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Deterministic PRNG for fixtures and property tests.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t x = state_;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  // Uniform in [0, 1).
  double next_unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform in {0, ..., n-1}; n must be > 0.
  std::uint64_t next_below(std::uint64_t n) { return next() % n; }

 private:
  std::uint64_t state_;
};

// Map a hash value to [-1, 1).
inline double signed_unit(std::uint64_t x) {
  return static_cast<double>(x >> 11) * 0x1.0p-53 * 2.0 - 1.0;
}

}  // namespace raspref::text
