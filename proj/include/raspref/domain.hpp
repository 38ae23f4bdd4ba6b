#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "raspref/errors.hpp"

// Core value types shared by every module. All of them are immutable in
// spirit: plain values, safe to copy and share across threads. Canonical
// serialization is the JSON object shape produced by to_json below
// (lower_snake_case field names, optionals omitted when absent).

namespace raspref {

inline void check_unit_interval(double v, const char* field) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw OutOfRange(std::string(field) + " must lie in [0,1]");
  }
}

namespace detail {

template <class T>
void put_optional(nlohmann::json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

template <class T>
void get_optional(const nlohmann::json& j, const char* key, std::optional<T>& v) {
  if (j.contains(key) && !j.at(key).is_null()) {
    v = j.at(key).get<T>();
  } else {
    v.reset();
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Problem: one input instance. reference_answer appears only in evaluation
// datasets and is never read by the refinement path.
// ---------------------------------------------------------------------------

struct Problem {
  std::string id;
  std::string statement;
  std::optional<std::string> reference_answer;

  void validate() const {
    if (statement.empty()) throw Precondition("Problem.statement must be non-empty");
  }

  bool operator==(const Problem&) const = default;
};

inline void to_json(nlohmann::json& j, const Problem& p) {
  j = nlohmann::json{{"id", p.id}, {"statement", p.statement}};
  detail::put_optional(j, "reference_answer", p.reference_answer);
}

inline void from_json(const nlohmann::json& j, Problem& p) {
  p.id = j.at("id").get<std::string>();
  p.statement = j.at("statement").get<std::string>();
  detail::get_optional(j, "reference_answer", p.reference_answer);
  p.validate();
}

// ---------------------------------------------------------------------------
// StructuredPrompt: the optimization variable. Structured so edits are
// deterministic operations; the flat text sent to the model comes from
// prompt_engine::render.
// ---------------------------------------------------------------------------

struct PromptExample {
  std::string problem;
  std::string solution;

  bool operator==(const PromptExample&) const = default;
};

inline void to_json(nlohmann::json& j, const PromptExample& e) {
  j = nlohmann::json{{"problem", e.problem}, {"solution", e.solution}};
}

inline void from_json(const nlohmann::json& j, PromptExample& e) {
  e.problem = j.at("problem").get<std::string>();
  e.solution = j.at("solution").get<std::string>();
}

struct StructuredPrompt {
  std::string instructions;
  std::vector<std::string> guidelines;
  std::vector<PromptExample> examples;
  int revision = 0;

  void validate() const {
    if (revision < 0) throw OutOfRange("StructuredPrompt.revision must be >= 0");
  }

  bool operator==(const StructuredPrompt&) const = default;
};

inline void to_json(nlohmann::json& j, const StructuredPrompt& p) {
  j = nlohmann::json{{"instructions", p.instructions},
                     {"guidelines", p.guidelines},
                     {"examples", p.examples},
                     {"revision", p.revision}};
}

inline void from_json(const nlohmann::json& j, StructuredPrompt& p) {
  p.instructions = j.at("instructions").get<std::string>();
  p.guidelines = j.at("guidelines").get<std::vector<std::string>>();
  p.examples = j.at("examples").get<std::vector<PromptExample>>();
  p.revision = j.at("revision").get<int>();
  p.validate();
}

// ---------------------------------------------------------------------------
// TraceSample: one generated reasoning trace plus its extracted answer and
// per-trace feedback.
// ---------------------------------------------------------------------------

struct TraceSample {
  std::string trace;
  std::optional<std::string> canonical_answer;
  std::optional<double> verifier_score;
  std::optional<std::string> critique;

  void validate() const {
    if (verifier_score) check_unit_interval(*verifier_score, "TraceSample.verifier_score");
  }

  bool operator==(const TraceSample&) const = default;
};

inline void to_json(nlohmann::json& j, const TraceSample& s) {
  j = nlohmann::json{{"trace", s.trace}};
  detail::put_optional(j, "canonical_answer", s.canonical_answer);
  detail::put_optional(j, "verifier_score", s.verifier_score);
  detail::put_optional(j, "critique", s.critique);
}

inline void from_json(const nlohmann::json& j, TraceSample& s) {
  s.trace = j.at("trace").get<std::string>();
  detail::get_optional(j, "canonical_answer", s.canonical_answer);
  detail::get_optional(j, "verifier_score", s.verifier_score);
  detail::get_optional(j, "critique", s.critique);
  s.validate();
}

// ---------------------------------------------------------------------------
// Trajectory: one stored record of a solved problem: the unit of memory.
// reward is kept for offline analysis only; the refinement loop never reads it.
// ---------------------------------------------------------------------------

struct Trajectory {
  Problem problem;
  StructuredPrompt prompt;
  std::string trace;
  std::optional<double> reward;
  std::optional<double> consistency;
  std::optional<double> verifier;
  std::optional<std::vector<double>> embedding;

  void validate() const {
    problem.validate();
    prompt.validate();
    if (reward) check_unit_interval(*reward, "Trajectory.reward");
    if (consistency) check_unit_interval(*consistency, "Trajectory.consistency");
    if (verifier) check_unit_interval(*verifier, "Trajectory.verifier");
    if (embedding) {
      for (double v : *embedding) {
        if (!std::isfinite(v)) throw OutOfRange("Trajectory.embedding entries must be finite");
      }
    }
  }

  bool operator==(const Trajectory&) const = default;
};

inline void to_json(nlohmann::json& j, const Trajectory& t) {
  j = nlohmann::json{{"problem", t.problem}, {"prompt", t.prompt}, {"trace", t.trace}};
  detail::put_optional(j, "reward", t.reward);
  detail::put_optional(j, "consistency", t.consistency);
  detail::put_optional(j, "verifier", t.verifier);
  detail::put_optional(j, "embedding", t.embedding);
}

inline void from_json(const nlohmann::json& j, Trajectory& t) {
  t.problem = j.at("problem").get<Problem>();
  t.prompt = j.at("prompt").get<StructuredPrompt>();
  t.trace = j.at("trace").get<std::string>();
  detail::get_optional(j, "reward", t.reward);
  detail::get_optional(j, "consistency", t.consistency);
  detail::get_optional(j, "verifier", t.verifier);
  detail::get_optional(j, "embedding", t.embedding);
  t.validate();
}

// ---------------------------------------------------------------------------
// QualityWeights: coefficients of the aggregate quality score.
// ---------------------------------------------------------------------------

struct QualityWeights {
  double alpha = 0.25;
  double beta = 0.25;
  double gamma = 0.25;
  double delta = 0.25;

  double sum() const { return alpha + beta + gamma + delta; }

  void validate() const {
    if (!(alpha >= 0.0) || !(beta >= 0.0) || !(gamma >= 0.0) || !(delta >= 0.0)) {
      throw OutOfRange("QualityWeights must be non-negative");
    }
    if (!(sum() > 0.0)) throw ZeroWeightSum("QualityWeights must not all be zero");
  }

  bool operator==(const QualityWeights&) const = default;
};

inline void to_json(nlohmann::json& j, const QualityWeights& w) {
  j = nlohmann::json{{"alpha", w.alpha}, {"beta", w.beta}, {"gamma", w.gamma}, {"delta", w.delta}};
}

inline void from_json(const nlohmann::json& j, QualityWeights& w) {
  w.alpha = j.at("alpha").get<double>();
  w.beta = j.at("beta").get<double>();
  w.gamma = j.at("gamma").get<double>();
  w.delta = j.at("delta").get<double>();
  w.validate();
}

// ---------------------------------------------------------------------------
// QualityReport: the four component scores and their weighted aggregate.
// ---------------------------------------------------------------------------

struct QualityReport {
  double c_cons = 0.0;
  double c_ver = 0.0;
  double c_crit = 0.0;
  double c_ret = 0.0;
  double q = 0.0;
  int k_used = 2;

  void validate() const {
    check_unit_interval(c_cons, "QualityReport.c_cons");
    check_unit_interval(c_ver, "QualityReport.c_ver");
    check_unit_interval(c_crit, "QualityReport.c_crit");
    check_unit_interval(c_ret, "QualityReport.c_ret");
    check_unit_interval(q, "QualityReport.q");
    if (k_used < 2) throw OutOfRange("QualityReport.k_used must be >= 2");
  }

  bool operator==(const QualityReport&) const = default;
};

inline void to_json(nlohmann::json& j, const QualityReport& r) {
  j = nlohmann::json{{"c_cons", r.c_cons}, {"c_ver", r.c_ver},   {"c_crit", r.c_crit},
                     {"c_ret", r.c_ret},   {"q", r.q},           {"k_used", r.k_used}};
}

inline void from_json(const nlohmann::json& j, QualityReport& r) {
  r.c_cons = j.at("c_cons").get<double>();
  r.c_ver = j.at("c_ver").get<double>();
  r.c_crit = j.at("c_crit").get<double>();
  r.c_ret = j.at("c_ret").get<double>();
  r.q = j.at("q").get<double>();
  r.k_used = j.at("k_used").get<int>();
  r.validate();
}

// ---------------------------------------------------------------------------
// EditSet: structured prompt-revision operations. Indices refer to the state
// of the prompt after every preceding edit in the list has been applied.
// ---------------------------------------------------------------------------

struct ReplaceInstructions {
  std::string text;
  bool operator==(const ReplaceInstructions&) const = default;
};

struct AppendGuideline {
  std::string text;
  bool operator==(const AppendGuideline&) const = default;
};

struct RemoveGuideline {
  std::size_t index = 0;
  bool operator==(const RemoveGuideline&) const = default;
};

struct ReplaceExample {
  std::size_t index = 0;
  PromptExample pair;
  bool operator==(const ReplaceExample&) const = default;
};

struct RemoveExample {
  std::size_t index = 0;
  bool operator==(const RemoveExample&) const = default;
};

struct AppendExample {
  PromptExample pair;
  bool operator==(const AppendExample&) const = default;
};

using EditOp = std::variant<ReplaceInstructions, AppendGuideline, RemoveGuideline, ReplaceExample,
                            RemoveExample, AppendExample>;

struct EditSet {
  std::vector<EditOp> ops;
  std::string rationale;

  bool empty() const { return ops.empty(); }

  bool operator==(const EditSet&) const = default;
};

inline void to_json(nlohmann::json& j, const EditOp& op) {
  std::visit(
      [&](const auto& e) {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, ReplaceInstructions>) {
          j = nlohmann::json{{"op", "replace_instructions"}, {"text", e.text}};
        } else if constexpr (std::is_same_v<T, AppendGuideline>) {
          j = nlohmann::json{{"op", "append_guideline"}, {"text", e.text}};
        } else if constexpr (std::is_same_v<T, RemoveGuideline>) {
          j = nlohmann::json{{"op", "remove_guideline"}, {"index", e.index}};
        } else if constexpr (std::is_same_v<T, ReplaceExample>) {
          j = nlohmann::json{{"op", "replace_example"},
                             {"index", e.index},
                             {"problem", e.pair.problem},
                             {"solution", e.pair.solution}};
        } else if constexpr (std::is_same_v<T, RemoveExample>) {
          j = nlohmann::json{{"op", "remove_example"}, {"index", e.index}};
        } else {
          j = nlohmann::json{
              {"op", "append_example"}, {"problem", e.pair.problem}, {"solution", e.pair.solution}};
        }
      },
      op);
}

inline void from_json(const nlohmann::json& j, EditOp& op) {
  const std::string kind = j.at("op").get<std::string>();
  if (kind == "replace_instructions") {
    op = ReplaceInstructions{j.at("text").get<std::string>()};
  } else if (kind == "append_guideline") {
    op = AppendGuideline{j.at("text").get<std::string>()};
  } else if (kind == "remove_guideline") {
    op = RemoveGuideline{j.at("index").get<std::size_t>()};
  } else if (kind == "replace_example") {
    op = ReplaceExample{j.at("index").get<std::size_t>(),
                        {j.at("problem").get<std::string>(), j.at("solution").get<std::string>()}};
  } else if (kind == "remove_example") {
    op = RemoveExample{j.at("index").get<std::size_t>()};
  } else if (kind == "append_example") {
    op = AppendExample{{j.at("problem").get<std::string>(), j.at("solution").get<std::string>()}};
  } else {
    throw ParseError("unknown edit op: " + kind);
  }
}

inline void to_json(nlohmann::json& j, const EditSet& e) {
  j = nlohmann::json{{"edits", e.ops}, {"rationale", e.rationale}};
}

inline void from_json(const nlohmann::json& j, EditSet& e) {
  e.ops = j.at("edits").get<std::vector<EditOp>>();
  e.rationale = j.value("rationale", std::string{});
}

}  // namespace raspref
