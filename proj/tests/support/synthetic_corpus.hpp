#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "raspref/model_backend.hpp"

// Synthetic "rule arithmetic" corpus for desk-scale separation runs. Each
// statement names one rule from the scripted backend's lexicon; the scripted
// model solves a rule problem only when the prompt demonstrates that rule, so
// retrieval-backed prompts succeed where the static prompt cannot. Training
// and evaluation operand ranges are disjoint so retrieval has to key on the
// rule vocabulary rather than shared numbers.

namespace raspref::testsupport {

inline std::string rule_statement(const std::string& rule, long long a, long long b) {
  return "Use the " + rule + " rule to combine " + std::to_string(a) + " with " +
         std::to_string(b) + ", then report the " + rule + " residue.";
}

inline std::string rule_solution(const std::string& rule, long long a, long long b) {
  const long long answer = apply_rule(rule, a, b);
  return "Apply the " + rule + " rule to " + std::to_string(a) + " and " + std::to_string(b) +
         ". The " + rule + " residue gives " + std::to_string(answer) + ".\n#### " +
         std::to_string(answer);
}

// Training file: n items cycling through the lexicon, operands in 1000+.
inline std::filesystem::path write_train_file(const std::filesystem::path& dir, std::size_t n) {
  const auto path = dir / "train.jsonl";
  std::ofstream out(path, std::ios::binary);
  const auto& rules = rule_lexicon();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& rule = rules[i % rules.size()];
    const long long a = 1000 + static_cast<long long>(i) * 7 % 800;
    const long long b = 1100 + static_cast<long long>(i) * 13 % 700;
    nlohmann::json line = {{"id", "train-" + std::to_string(i)},
                           {"statement", rule_statement(rule, a, b)},
                           {"solution", rule_solution(rule, a, b)}};
    out << line.dump() << '\n';
  }
  return path;
}

// Evaluation file: n items cycling through the lexicon, operands in 100-999,
// disjoint from the training operands. reference_answer is the true value.
inline std::filesystem::path write_eval_file(const std::filesystem::path& dir, std::size_t n) {
  const auto path = dir / "eval.jsonl";
  std::ofstream out(path, std::ios::binary);
  const auto& rules = rule_lexicon();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& rule = rules[i % rules.size()];
    const long long a = 100 + static_cast<long long>(i) * 11 % 400;
    const long long b = 510 + static_cast<long long>(i) * 17 % 400;
    nlohmann::json line = {{"id", "eval-" + std::to_string(i)},
                           {"statement", rule_statement(rule, a, b)},
                           {"reference_answer", std::to_string(apply_rule(rule, a, b))}};
    out << line.dump() << '\n';
  }
  return path;
}

}  // namespace raspref::testsupport
