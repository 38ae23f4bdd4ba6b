#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "raspref/domain.hpp"
#include "raspref/errors.hpp"
#include "raspref/text.hpp"

// Prompt construction and editing: builds the initial prompt from retrieved
// trajectories, distills recurring step patterns into guidelines, applies
// structured edit sets, and renders the flat text handed to the model.

namespace raspref {

inline constexpr std::size_t kDefaultMaxExamples = 5;
inline constexpr int kDefaultMinSupport = 2;

// Chain-of-thought base prompt shared by every arm; retrieval and edits
// specialize it per input.
inline StructuredPrompt default_base_prompt() {
  StructuredPrompt p;
  p.instructions =
      "Solve the problem with careful step-by-step reasoning. Show every intermediate "
      "calculation. Finish with the final answer on its own line in the form: #### <answer>";
  return p;
}

namespace detail {

// Steps are line or sentence segments of a trace.
inline std::vector<std::string> split_steps(std::string_view trace) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    const auto begin = cur.find_first_not_of(" \t\r");
    if (begin != std::string::npos) {
      const auto end = cur.find_last_not_of(" \t\r");
      out.push_back(cur.substr(begin, end - begin + 1));
    }
    cur.clear();
  };
  for (char c : trace) {
    if (c == '\n' || c == '.' || c == '!' || c == '?') {
      flush();
    } else {
      cur.push_back(c);
    }
  }
  flush();
  return out;
}

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace detail

// Deterministic pattern mining: a content-word bigram occurring in at least
// min_support retrieved traces marks its first containing step as a guideline.
// Output is sorted by support descending, then lexicographically.
inline std::vector<std::string> distill_guidelines(const std::vector<Trajectory>& retrieved,
                                                   int min_support = kDefaultMinSupport) {
  if (min_support < 1) min_support = 1;

  struct Occurrence {
    std::size_t trace_idx = 0;
    std::size_t step_idx = 0;
    std::string step;
  };
  std::unordered_map<std::string, Occurrence> first_step;
  std::unordered_map<std::string, std::unordered_set<std::size_t>> support;

  for (std::size_t ti = 0; ti < retrieved.size(); ++ti) {
    const auto steps = detail::split_steps(retrieved[ti].trace);
    for (std::size_t si = 0; si < steps.size(); ++si) {
      const auto words = text::content_words(steps[si]);
      for (std::size_t wi = 0; wi + 1 < words.size(); ++wi) {
        std::string bigram = words[wi] + ' ' + words[wi + 1];
        support[bigram].insert(ti);
        first_step.emplace(std::move(bigram), Occurrence{ti, si, steps[si]});
      }
    }
  }

  // Deduplicate by representative step, keeping the highest support seen.
  std::unordered_map<std::string, std::size_t> by_step;
  for (const auto& [bigram, traces] : support) {
    if (traces.size() < static_cast<std::size_t>(min_support)) continue;
    auto& best = by_step[first_step.at(bigram).step];
    best = std::max(best, traces.size());
  }

  std::vector<std::pair<std::string, std::size_t>> guidelines;
  guidelines.reserve(by_step.size());
  for (const auto& [step, sup] : by_step) {
    guidelines.emplace_back("Common step pattern: " + step, sup);
  }
  std::sort(guidelines.begin(), guidelines.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  std::vector<std::string> out;
  out.reserve(guidelines.size());
  for (auto& [g, sup] : guidelines) out.push_back(std::move(g));
  return out;
}

// Pluggable distillation strategy; the deterministic pattern miner above is
// the default, an LLM summarizer (model_backend.hpp) the alternative.
using GuidelineDistiller =
    std::function<std::vector<std::string>(const std::vector<Trajectory>&, int min_support)>;

// Prompt assembly from precomputed guidelines: base instructions, base
// guidelines plus the new ones, and the top retrieved (problem, trace) pairs
// as examples, in rank order.
inline StructuredPrompt build_prompt_with_guidelines(const StructuredPrompt& base,
                                                     const std::vector<Trajectory>& retrieved,
                                                     std::vector<std::string> guidelines,
                                                     std::size_t max_examples) {
  base.validate();
  StructuredPrompt out = base;
  for (auto& g : guidelines) out.guidelines.push_back(std::move(g));
  out.examples.clear();
  const std::size_t n = std::min(max_examples, retrieved.size());
  for (std::size_t i = 0; i < n; ++i) {
    out.examples.push_back({retrieved[i].problem.statement, retrieved[i].trace});
  }
  out.revision = 0;
  return out;
}

// Initial prompt with deterministically distilled guidelines.
inline StructuredPrompt build_prompt(const StructuredPrompt& base,
                                     const std::vector<Trajectory>& retrieved,
                                     std::size_t max_examples = kDefaultMaxExamples,
                                     int min_support = kDefaultMinSupport) {
  return build_prompt_with_guidelines(base, retrieved, distill_guidelines(retrieved, min_support),
                                      max_examples);
}

// Applies edits in order against the running state; any invalid index rejects
// the whole set (the input prompt is never modified). Revision +1 per set.
inline StructuredPrompt apply_edits(const StructuredPrompt& prompt, const EditSet& edits) {
  if (edits.ops.empty()) throw Precondition("apply_edits: edit set must be non-empty");
  StructuredPrompt out = prompt;
  for (const auto& op : edits.ops) {
    std::visit(detail::overloaded{
                   [&](const ReplaceInstructions& e) { out.instructions = e.text; },
                   [&](const AppendGuideline& e) { out.guidelines.push_back(e.text); },
                   [&](const RemoveGuideline& e) {
                     if (e.index >= out.guidelines.size()) {
                       throw InvalidEditIndex("remove_guideline index " + std::to_string(e.index) +
                                              " out of range " +
                                              std::to_string(out.guidelines.size()));
                     }
                     out.guidelines.erase(out.guidelines.begin() +
                                          static_cast<std::ptrdiff_t>(e.index));
                   },
                   [&](const ReplaceExample& e) {
                     if (e.index >= out.examples.size()) {
                       throw InvalidEditIndex("replace_example index " + std::to_string(e.index) +
                                              " out of range " + std::to_string(out.examples.size()));
                     }
                     out.examples[e.index] = e.pair;
                   },
                   [&](const RemoveExample& e) {
                     if (e.index >= out.examples.size()) {
                       throw InvalidEditIndex("remove_example index " + std::to_string(e.index) +
                                              " out of range " + std::to_string(out.examples.size()));
                     }
                     out.examples.erase(out.examples.begin() +
                                        static_cast<std::ptrdiff_t>(e.index));
                   },
                   [&](const AppendExample& e) { out.examples.push_back(e.pair); },
               },
               op);
  }
  out.revision = prompt.revision + 1;
  return out;
}

struct RenderBudget {
  std::size_t max_tokens = 0;  // 0 disables the budget
  double safety_factor = 1.0;
};

struct RenderedPrompt {
  std::string text;
  std::size_t examples_dropped = 0;
};

// Whitespace token count; the budget uses this times a safety factor.
inline std::size_t estimate_tokens(std::string_view s) {
  std::size_t count = 0;
  bool in_token = false;
  for (char c : s) {
    const bool ws = c == ' ' || c == '\n' || c == '\t' || c == '\r';
    if (!ws && !in_token) ++count;
    in_token = !ws;
  }
  return count;
}

namespace detail {

inline std::string render_with(const StructuredPrompt& p, const Problem& x,
                               std::size_t n_examples) {
  std::string out = p.instructions;
  out += '\n';
  if (!p.guidelines.empty()) {
    out += "\nGuidelines:\n";
    for (std::size_t i = 0; i < p.guidelines.size(); ++i) {
      out += std::to_string(i + 1) + ". " + p.guidelines[i] + '\n';
    }
  }
  for (std::size_t i = 0; i < n_examples; ++i) {
    out += "\nProblem: " + p.examples[i].problem + "\nSolution: " + p.examples[i].solution + '\n';
  }
  out += "\nProblem: " + x.statement +
         "\nSolution: Work through the problem step by step, then give the final answer on its "
         "own line in the form: #### <answer>\n";
  return out;
}

}  // namespace detail

// Deterministic flat rendering. Over budget, whole examples are dropped from
// the tail (never split) and the count is reported.
inline RenderedPrompt render(const StructuredPrompt& prompt, const Problem& problem,
                             const RenderBudget& budget = {}) {
  prompt.validate();
  std::size_t keep = prompt.examples.size();
  std::string out = detail::render_with(prompt, problem, keep);
  if (budget.max_tokens > 0) {
    while (keep > 0 && static_cast<double>(estimate_tokens(out)) * budget.safety_factor >
                           static_cast<double>(budget.max_tokens)) {
      --keep;
      out = detail::render_with(prompt, problem, keep);
    }
  }
  return {std::move(out), prompt.examples.size() - keep};
}

}  // namespace raspref
