#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "raspref/domain.hpp"
#include "raspref/errors.hpp"
#include "raspref/text.hpp"

// Label-free scoring: canonical answer extraction, the four component scores
// (multi-sample consistency, verifier mean, critique mean, retrieval
// alignment) and their weighted aggregate. Everything here is a pure function.

namespace raspref {

// Normalized final answer: sign + digits + optional decimal point, no
// separators, no trailing zeros after the point.
struct CanonicalAnswer {
  std::string value;

  bool operator==(const CanonicalAnswer&) const = default;
};

namespace detail {

inline bool is_digit(char c) { return c >= '0' && c <= '9'; }

inline std::string normalize_number(bool negative, std::string int_part, std::string frac_part) {
  const std::size_t nz = int_part.find_first_not_of('0');
  int_part = (nz == std::string::npos) ? "0" : int_part.substr(nz);
  while (!frac_part.empty() && frac_part.back() == '0') frac_part.pop_back();
  std::string out;
  if (negative) out.push_back('-');
  out += int_part.empty() ? "0" : int_part;
  if (!frac_part.empty()) {
    out.push_back('.');
    out += frac_part;
  }
  if (out == "-0") out = "0";
  return out;
}

struct ScannedNumber {
  std::string canonical;
  std::size_t pos = 0;
};

// Finds numeric tokens: optional sign, integer digits with optional
// comma-separated thousands groups, optional fractional part. Currency
// symbols and surrounding words are simply not part of the token.
inline std::vector<ScannedNumber> scan_numbers(std::string_view s) {
  std::vector<ScannedNumber> out;
  const std::size_t n = s.size();
  std::size_t i = 0;
  while (i < n) {
    bool negative = false;
    const std::size_t start = i;
    char c = s[i];
    if ((c == '-' || c == '+') && i + 1 < n &&
        (is_digit(s[i + 1]) || (s[i + 1] == '.' && i + 2 < n && is_digit(s[i + 2])))) {
      // A sign directly after a digit is an operator, not a sign ("8-3").
      if (i > 0 && is_digit(s[i - 1])) {
        ++i;
        continue;
      }
      negative = (c == '-');
      ++i;
      c = s[i];
    }
    if (is_digit(c) || (c == '.' && i + 1 < n && is_digit(s[i + 1]))) {
      std::string int_part, frac_part;
      while (i < n && is_digit(s[i])) int_part.push_back(s[i++]);
      // Thousands groups: ",ddd" not followed by a fourth digit.
      while (!int_part.empty() && i + 3 < n && s[i] == ',' && is_digit(s[i + 1]) &&
             is_digit(s[i + 2]) && is_digit(s[i + 3]) && !(i + 4 < n && is_digit(s[i + 4]))) {
        int_part += s.substr(i + 1, 3);
        i += 4;
      }
      if (i < n && s[i] == '.' && i + 1 < n && is_digit(s[i + 1])) {
        ++i;
        while (i < n && is_digit(s[i])) frac_part.push_back(s[i++]);
      }
      out.push_back({normalize_number(negative, std::move(int_part), std::move(frac_part)), start});
      continue;
    }
    ++i;
  }
  return out;
}

inline std::string lowered(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = text::ascii_lower(c);
  return out;
}

}  // namespace detail

// Extracts the final answer from a reasoning trace. Priority: text after the
// last "####" delimiter, then the last number after the last "answer" cue,
// then the last number anywhere. Absent when no number is found.
inline std::optional<CanonicalAnswer> canonicalize(std::string_view trace) {
  constexpr std::string_view kDelimiter = "####";
  if (const auto pos = trace.rfind(kDelimiter); pos != std::string_view::npos) {
    const auto nums = detail::scan_numbers(trace.substr(pos + kDelimiter.size()));
    if (!nums.empty()) return CanonicalAnswer{nums.front().canonical};
  }
  const std::string low = detail::lowered(trace);
  if (const auto pos = low.rfind("answer"); pos != std::string::npos) {
    const auto nums = detail::scan_numbers(trace.substr(pos + 6));
    if (!nums.empty()) return CanonicalAnswer{nums.back().canonical};
  }
  const auto nums = detail::scan_numbers(trace);
  if (!nums.empty()) return CanonicalAnswer{nums.back().canonical};
  return std::nullopt;
}

// Fraction of ordered sample pairs whose canonical answers agree. Absent
// answers match nothing, including other absent answers.
inline double consistency(const std::vector<TraceSample>& samples) {
  const std::size_t k = samples.size();
  if (k < 2) throw InsufficientSamples("consistency requires K >= 2 samples");
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& s : samples) {
    if (s.canonical_answer) ++counts[*s.canonical_answer];
  }
  double agree = 0.0;
  for (const auto& [answer, m] : counts) {
    agree += static_cast<double>(m) * static_cast<double>(m - 1);
  }
  return agree / (static_cast<double>(k) * static_cast<double>(k - 1));
}

inline double verifier_mean(const std::vector<TraceSample>& samples) {
  if (samples.empty()) throw Precondition("verifier_mean requires at least one sample");
  double sum = 0.0;
  for (const auto& s : samples) {
    if (!s.verifier_score) throw MissingScore("verifier_mean: sample lacks verifier_score");
    check_unit_interval(*s.verifier_score, "verifier_score");
    sum += *s.verifier_score;
  }
  return sum / static_cast<double>(samples.size());
}

inline double critique_mean(const std::vector<TraceSample>& samples,
                            const std::vector<double>& scores) {
  if (samples.empty()) throw Precondition("critique_mean requires at least one sample");
  if (samples.size() != scores.size()) {
    throw LengthMismatch("critique_mean: " + std::to_string(samples.size()) + " samples vs " +
                         std::to_string(scores.size()) + " scores");
  }
  double sum = 0.0;
  for (double v : scores) {
    check_unit_interval(v, "critique score");
    sum += v;
  }
  return sum / static_cast<double>(scores.size());
}

// Mean over samples of |ContentWords(trace) ∩ V| / |V| where V is the content
// vocabulary of all retrieved traces. 0.0 when nothing was retrieved (the
// aggregate then drops the term, see score_prompt_samples).
inline double retrieval_alignment(const std::vector<TraceSample>& samples,
                                  const std::vector<Trajectory>& retrieved) {
  if (samples.empty()) throw Precondition("retrieval_alignment requires at least one sample");
  if (retrieved.empty()) return 0.0;
  std::unordered_set<std::string> vocab;
  for (const auto& t : retrieved) {
    for (auto& w : text::content_words(t.trace)) vocab.insert(std::move(w));
  }
  if (vocab.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& s : samples) {
    std::unordered_set<std::string> hit;
    for (auto& w : text::content_words(s.trace)) {
      if (vocab.count(w)) hit.insert(std::move(w));
    }
    sum += static_cast<double>(hit.size()) / static_cast<double>(vocab.size());
  }
  return sum / static_cast<double>(samples.size());
}

struct ComponentScores {
  double c_cons = 0.0;
  double c_ver = 0.0;
  double c_crit = 0.0;
  double c_ret = 0.0;
};

// Pluggable alignment strategy; the deterministic overlap above is the
// default, an LLM judge (model_backend.hpp) the alternative.
using AlignmentScorer =
    std::function<double(const std::vector<TraceSample>&, const std::vector<Trajectory>&)>;

// Weighted aggregate, normalized by the weight sum so q stays in [0,1] and
// round-to-round comparisons are scale-free.
inline QualityReport quality(const ComponentScores& c, const QualityWeights& weights, int k_used) {
  weights.validate();
  check_unit_interval(c.c_cons, "c_cons");
  check_unit_interval(c.c_ver, "c_ver");
  check_unit_interval(c.c_crit, "c_crit");
  check_unit_interval(c.c_ret, "c_ret");
  if (k_used < 2) throw Precondition("quality: k_used must be >= 2");
  const double q = (weights.alpha * c.c_cons + weights.beta * c.c_ver + weights.gamma * c.c_crit +
                    weights.delta * c.c_ret) /
                   weights.sum();
  return QualityReport{c.c_cons, c.c_ver, c.c_crit, c.c_ret, std::clamp(q, 0.0, 1.0), k_used};
}

// Convenience composition used by the refine loop: computes all four
// components and aggregates them. On an empty retrieval the delta weight is
// zeroed for this evaluation so a cold store does not depress q.
inline QualityReport score_prompt_samples(const std::vector<TraceSample>& samples,
                                          const std::vector<double>& critique_scores,
                                          const std::vector<Trajectory>& retrieved,
                                          QualityWeights weights) {
  ComponentScores c;
  c.c_cons = consistency(samples);
  c.c_ver = verifier_mean(samples);
  c.c_crit = critique_mean(samples, critique_scores);
  c.c_ret = retrieval_alignment(samples, retrieved);
  if (retrieved.empty()) weights.delta = 0.0;
  return quality(c, weights, static_cast<int>(samples.size()));
}

}  // namespace raspref
