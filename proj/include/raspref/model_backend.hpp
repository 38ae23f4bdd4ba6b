#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "raspref/domain.hpp"
#include "raspref/embed_index.hpp"
#include "raspref/errors.hpp"
#include "raspref/prompt_engine.hpp"
#include "raspref/scoring.hpp"
#include "raspref/text.hpp"

// Abstraction over the frozen reasoning model, the verifier, the critic, the
// prompt editor and the embedder. Two implementations: ScriptedBackend here
// (deterministic, offline) and LiveBackend in live_backend.hpp (HTTP).

namespace raspref {

struct GenerationConfig {
  double temperature = 0.7;
  double top_p = 0.95;
  int max_output_tokens = 1024;
  std::optional<std::uint64_t> seed;

  void validate() const {
    if (!(temperature >= 0.0)) throw OutOfRange("GenerationConfig.temperature must be >= 0");
    if (!(top_p > 0.0 && top_p <= 1.0)) throw OutOfRange("GenerationConfig.top_p must be in (0,1]");
    if (max_output_tokens <= 0) throw OutOfRange("GenerationConfig.max_output_tokens must be > 0");
  }

  bool operator==(const GenerationConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const GenerationConfig& g) {
  j = nlohmann::json{{"temperature", g.temperature},
                     {"top_p", g.top_p},
                     {"max_output_tokens", g.max_output_tokens}};
  detail::put_optional(j, "seed", g.seed);
}

inline void from_json(const nlohmann::json& j, GenerationConfig& g) {
  g.temperature = j.value("temperature", 0.7);
  g.top_p = j.value("top_p", 0.95);
  g.max_output_tokens = j.value("max_output_tokens", 1024);
  detail::get_optional(j, "seed", g.seed);
  g.validate();
}

enum class BackendKind { scripted, live };

inline std::string to_string(BackendKind k) {
  return k == BackendKind::scripted ? "scripted" : "live";
}

inline BackendKind backend_kind_from_string(std::string_view s) {
  if (s == "scripted") return BackendKind::scripted;
  if (s == "live") return BackendKind::live;
  throw ParseError("unknown backend kind: " + std::string(s));
}

struct BackendSpec {
  BackendKind kind = BackendKind::scripted;
  std::string model_name = "gpt-4o-mini";
  std::string embed_model_name = "text-embedding-3-small";
  std::string endpoint = "https://api.openai.com";
  std::string credential_env_var = "OPENAI_API_KEY";
  int max_retries = 3;
  int max_in_flight = 4;
  std::size_t scripted_embed_dim = 64;
  std::size_t max_prompt_tokens = 0;  // 0 disables the render budget
  double prompt_token_safety = 1.0;

  bool operator==(const BackendSpec&) const = default;
};

inline void to_json(nlohmann::json& j, const BackendSpec& s) {
  j = nlohmann::json{{"kind", to_string(s.kind)},
                     {"model_name", s.model_name},
                     {"embed_model_name", s.embed_model_name},
                     {"endpoint", s.endpoint},
                     {"credential_env_var", s.credential_env_var},
                     {"max_retries", s.max_retries},
                     {"max_in_flight", s.max_in_flight},
                     {"scripted_embed_dim", s.scripted_embed_dim},
                     {"max_prompt_tokens", s.max_prompt_tokens},
                     {"prompt_token_safety", s.prompt_token_safety}};
}

inline void from_json(const nlohmann::json& j, BackendSpec& s) {
  s.kind = backend_kind_from_string(j.value("kind", "scripted"));
  s.model_name = j.value("model_name", s.model_name);
  s.embed_model_name = j.value("embed_model_name", s.embed_model_name);
  s.endpoint = j.value("endpoint", s.endpoint);
  s.credential_env_var = j.value("credential_env_var", s.credential_env_var);
  s.max_retries = j.value("max_retries", s.max_retries);
  s.max_in_flight = j.value("max_in_flight", s.max_in_flight);
  s.scripted_embed_dim = j.value("scripted_embed_dim", s.scripted_embed_dim);
  s.max_prompt_tokens = j.value("max_prompt_tokens", s.max_prompt_tokens);
  s.prompt_token_safety = j.value("prompt_token_safety", s.prompt_token_safety);
}

inline RenderBudget render_budget_of(const BackendSpec& s) {
  return RenderBudget{s.max_prompt_tokens, s.prompt_token_safety};
}

class ModelBackend {
 public:
  virtual ~ModelBackend() = default;

  // Draws k reasoning traces for the problem under the rendered prompt.
  // Every returned sample has a non-empty trace and its canonical answer set.
  virtual std::vector<TraceSample> generate_traces(const StructuredPrompt& prompt,
                                                   const Problem& problem, int k,
                                                   const GenerationConfig& cfg) = 0;

  // Plausibility/structure score for one trace, in [0,1].
  virtual double verify(const Problem& problem, const std::string& trace) = 0;

  // Natural-language critique of one trace.
  virtual std::string critique(const Problem& problem, const std::string& trace) = 0;

  // Maps a (trace, critique) pair to [0,1]: 1 means the critique confirms the
  // trace is sound, 0 means it identifies a fatal error.
  virtual double critique_score(const Problem& problem, const std::string& trace,
                                const std::string& critique) = 0;

  // Structured prompt edits. An empty edit set is the "no useful edit"
  // sentinel; the refine loop stops early on it.
  virtual EditSet propose_edits(const StructuredPrompt& prompt, const Problem& problem,
                                const std::vector<TraceSample>& samples,
                                const std::vector<std::string>& critiques,
                                const std::vector<Trajectory>& retrieved) = 0;

  virtual EmbeddingVector embed(const std::string& text) = 0;

  // One free-form completion; the primitive behind the optional LLM-backed
  // distiller and alignment scorer.
  virtual std::string complete(const std::string& request) = 0;
};

// ---------------------------------------------------------------------------
// Reply parsers (pure; shared by the live backend and its tests).
// ---------------------------------------------------------------------------

// Extracts a score in [0,1] from a judge reply. Prefers the first number
// after the last "score" cue, then falls back to the last in-range number.
inline std::optional<double> parse_judge_score(std::string_view reply) {
  const std::string low = detail::lowered(reply);
  auto in_range = [](double v) { return v >= 0.0 && v <= 1.0; };
  auto value_of = [](const detail::ScannedNumber& n) { return std::stod(n.canonical); };
  if (const auto pos = low.rfind("score"); pos != std::string::npos) {
    const auto nums = detail::scan_numbers(reply.substr(pos + 5));
    if (!nums.empty() && in_range(value_of(nums.front()))) return value_of(nums.front());
  }
  const auto nums = detail::scan_numbers(reply);
  for (auto it = nums.rbegin(); it != nums.rend(); ++it) {
    if (in_range(value_of(*it))) return value_of(*it);
  }
  return std::nullopt;
}

// Runs `ask` once, re-asks once on an unparsable reply, then falls back to
// 0.0 with a warning. This is the verifier/critique-scorer recovery policy.
inline double judge_score_with_retry(const std::function<std::string()>& ask,
                                     const char* what = "judge") {
  for (int attempt = 0; attempt < 2; ++attempt) {
    if (const auto score = parse_judge_score(ask())) return *score;
  }
  std::cerr << "raspref: " << what << " reply had no score in [0,1] after re-ask; scoring 0.0\n";
  return 0.0;
}

namespace detail {

// Pulls a JSON document out of a model reply: the whole reply, a fenced
// block, or the outermost {...} / [...] span. An object carrying an "edits"
// key wins; otherwise a bare array beats any other parse.
inline nlohmann::json extract_json_payload(std::string_view reply) {
  const auto try_parse = [](std::string_view s) -> std::optional<nlohmann::json> {
    const auto parsed = nlohmann::json::parse(s, nullptr, false);
    if (parsed.is_discarded()) return std::nullopt;
    return parsed;
  };

  std::vector<std::string_view> candidates = {reply};
  if (const auto fence = reply.find("```"); fence != std::string_view::npos) {
    const auto body_start = reply.find('\n', fence);
    const auto fence_end = reply.find("```", fence + 3);
    if (body_start != std::string_view::npos && fence_end != std::string_view::npos &&
        body_start < fence_end) {
      candidates.push_back(reply.substr(body_start + 1, fence_end - body_start - 1));
    }
  }
  for (const char open : {'{', '['}) {
    const char close = open == '{' ? '}' : ']';
    const auto first = reply.find(open);
    const auto last = reply.rfind(close);
    if (first != std::string_view::npos && last != std::string_view::npos && first < last) {
      candidates.push_back(reply.substr(first, last - first + 1));
    }
  }

  std::optional<nlohmann::json> array_payload, other_payload;
  for (const auto candidate : candidates) {
    const auto j = try_parse(candidate);
    if (!j) continue;
    if (j->is_object() && j->contains("edits")) return *j;
    if (j->is_array() && !array_payload) array_payload = *j;
    if (!other_payload) other_payload = *j;
  }
  if (array_payload) return *array_payload;
  if (other_payload) return *other_payload;
  throw UnparsableEdits("reply contains no parsable JSON");
}

}  // namespace detail

// Parses a model reply into an EditSet and validates it against the prompt
// (sequential index semantics, via a scratch application).
inline EditSet parse_edit_reply(std::string_view reply, const StructuredPrompt& prompt) {
  nlohmann::json payload = detail::extract_json_payload(reply);
  if (payload.is_array()) {
    payload = nlohmann::json{{"edits", payload}, {"rationale", ""}};
  }
  EditSet edits;
  try {
    edits = payload.get<EditSet>();
  } catch (const std::exception& e) {
    throw UnparsableEdits(std::string("malformed edit reply: ") + e.what());
  }
  if (!edits.ops.empty()) {
    try {
      apply_edits(prompt, edits);
    } catch (const InvalidEditIndex& e) {
      throw UnparsableEdits(std::string("edit indices invalid for prompt: ") + e.what());
    }
  }
  return edits;
}

// ---------------------------------------------------------------------------
// ScriptedBackend: deterministic offline model.
//
// The default behavior simulates a model that can solve "rule" arithmetic
// problems ("Use the vortex rule to combine 214 with 137...") only when the
// prompt demonstrates the same rule, which makes retrieval-vs-static
// separations reproducible without a network. Hooks let tests script
// arbitrary deterministic behavior.
// ---------------------------------------------------------------------------

struct RuleProblem {
  std::string rule;
  long long lhs = 0;
  long long rhs = 0;
  long long answer = 0;
};

inline const std::vector<std::string>& rule_lexicon() {
  static const std::vector<std::string> rules = {"vortex", "prism",  "ember", "quill", "fathom",
                                                 "zephyr", "cobalt", "sable", "onyx",  "umber"};
  return rules;
}

inline long long apply_rule(std::string_view rule, long long a, long long b) {
  if (rule == "vortex") return a + b;
  if (rule == "prism") return a - b;
  if (rule == "ember") return std::max(a, b);
  if (rule == "quill") return std::min(a, b);
  if (rule == "fathom") return 2 * a - b;
  if (rule == "zephyr") return a + 2 * b;
  if (rule == "cobalt") return a > b ? a - b : b - a;
  if (rule == "sable") return 2 * (a + b);
  if (rule == "onyx") return a + b + 10;
  if (rule == "umber") return b - a;
  throw Precondition("unknown rule: " + std::string(rule));
}

inline std::optional<RuleProblem> parse_rule_problem(std::string_view statement) {
  std::optional<std::string> rule;
  for (const auto& word : text::tokenize(statement)) {
    for (const auto& candidate : rule_lexicon()) {
      if (word == candidate) {
        rule = candidate;
        break;
      }
    }
    if (rule) break;
  }
  if (!rule) return std::nullopt;
  const auto nums = detail::scan_numbers(statement);
  std::vector<long long> ints;
  for (const auto& n : nums) {
    if (n.canonical.find('.') == std::string::npos) ints.push_back(std::stoll(n.canonical));
    if (ints.size() == 2) break;
  }
  if (ints.size() < 2) return std::nullopt;
  return RuleProblem{*rule, ints[0], ints[1], apply_rule(*rule, ints[0], ints[1])};
}

inline std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
  if (needle.empty()) return 0;
  std::size_t count = 0;
  std::size_t pos = 0;
  while ((pos = haystack.find(needle, pos)) != std::string_view::npos) {
    ++count;
    pos += needle.size();
  }
  return count;
}

namespace detail {

inline std::optional<double> extract_tag_value(std::string_view text, std::string_view opener) {
  const auto pos = text.find(opener);
  if (pos == std::string_view::npos) return std::nullopt;
  const auto end = text.find("]]", pos);
  if (end == std::string_view::npos) return std::nullopt;
  const auto nums = scan_numbers(text.substr(pos + opener.size(), end - pos - opener.size()));
  if (nums.empty()) return std::nullopt;
  return std::clamp(std::stod(nums.front().canonical), 0.0, 1.0);
}

}  // namespace detail

class ScriptedBackend : public ModelBackend {
 public:
  struct Hooks {
    std::function<std::vector<std::string>(const StructuredPrompt&, const std::string& rendered,
                                           const Problem&, int k, std::uint64_t seed)>
        traces;
    std::function<double(const Problem&, const std::string& trace)> verifier;
    std::function<std::string(const Problem&, const std::string& trace)> critic;
    std::function<double(const Problem&, const std::string& trace, const std::string& critique)>
        critique_scorer;
    std::function<EditSet(const StructuredPrompt&, const Problem&)> editor;
    std::function<std::string(const std::string& request)> completer;
  };

  explicit ScriptedBackend(std::uint64_t seed = 0, std::size_t embed_dim = 64,
                           RenderBudget budget = {})
      : seed_(seed), embed_dim_(embed_dim), budget_(budget) {}

  ScriptedBackend(Hooks hooks, std::uint64_t seed = 0, std::size_t embed_dim = 64,
                  RenderBudget budget = {})
      : hooks_(std::move(hooks)), seed_(seed), embed_dim_(embed_dim), budget_(budget) {}

  std::vector<TraceSample> generate_traces(const StructuredPrompt& prompt, const Problem& problem,
                                           int k, const GenerationConfig& cfg) override {
    if (k < 1) throw Precondition("generate_traces requires k >= 1");
    problem.validate();
    cfg.validate();
    const std::uint64_t seed = cfg.seed.value_or(seed_);
    const auto rendered_prompt = render(prompt, problem, budget_);
    if (rendered_prompt.examples_dropped > 0) {
      std::cerr << "raspref: dropped " << rendered_prompt.examples_dropped
                << " prompt example(s) to fit the token budget\n";
    }
    const std::string& rendered = rendered_prompt.text;
    const auto traces = hooks_.traces ? hooks_.traces(prompt, rendered, problem, k, seed)
                                      : default_traces(rendered, problem, k, seed);
    if (traces.size() != static_cast<std::size_t>(k)) {
      throw Error("scripted traces hook returned " + std::to_string(traces.size()) +
                  " traces, expected " + std::to_string(k));
    }
    std::vector<TraceSample> out;
    out.reserve(traces.size());
    for (const auto& trace : traces) {
      if (trace.empty()) throw EmptyCompletion("scripted backend produced an empty trace");
      TraceSample s;
      s.trace = trace;
      if (auto c = canonicalize(trace)) s.canonical_answer = c->value;
      out.push_back(std::move(s));
    }
    return out;
  }

  double verify(const Problem& problem, const std::string& trace) override {
    if (trace.empty()) throw Precondition("verify requires a non-empty trace");
    const double v = hooks_.verifier ? hooks_.verifier(problem, trace) : default_verifier(trace);
    check_unit_interval(v, "scripted verifier score");
    return v;
  }

  std::string critique(const Problem& problem, const std::string& trace) override {
    if (trace.empty()) throw Precondition("critique requires a non-empty trace");
    const std::string c = hooks_.critic ? hooks_.critic(problem, trace) : default_critic(trace);
    if (c.empty()) throw EmptyCompletion("scripted critic produced an empty critique");
    return c;
  }

  double critique_score(const Problem& problem, const std::string& trace,
                        const std::string& critique) override {
    if (trace.empty() || critique.empty()) {
      throw Precondition("critique_score requires non-empty trace and critique");
    }
    const double v = hooks_.critique_scorer ? hooks_.critique_scorer(problem, trace, critique)
                                            : default_critique_score(trace, critique);
    check_unit_interval(v, "scripted critique score");
    return v;
  }

  EditSet propose_edits(const StructuredPrompt& prompt, const Problem& problem,
                        const std::vector<TraceSample>& samples,
                        const std::vector<std::string>& critiques,
                        const std::vector<Trajectory>& /*retrieved*/) override {
    if (samples.empty()) throw Precondition("propose_edits requires at least one sample");
    if (samples.size() != critiques.size()) {
      throw LengthMismatch("propose_edits: samples and critiques must align");
    }
    if (hooks_.editor) return hooks_.editor(prompt, problem);
    EditSet edits;
    edits.ops = {AppendGuideline{"verify each arithmetic step"}};
    edits.rationale = "reinforce stepwise verification";
    return edits;
  }

  // Deterministic bag-of-words hash projection, L2-normalized. Independent of
  // the seed so that indexes built by one process match queries from another.
  EmbeddingVector embed(const std::string& text_in) override {
    if (text_in.empty()) throw Precondition("embed requires non-empty text");
    std::vector<double> v(embed_dim_, 0.0);
    auto add_word = [&](std::string_view w) {
      const std::uint64_t h = text::fnv1a64(w);
      for (std::size_t j = 0; j < v.size(); ++j) {
        v[j] += text::signed_unit(text::splitmix64(h ^ text::splitmix64(j)));
      }
    };
    const auto words = text::content_words(text_in);
    if (words.empty()) {
      add_word(text_in);
    } else {
      for (const auto& w : words) add_word(w);
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm == 0.0) {
      v[0] = 1.0;
      norm = 1.0;
    }
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return EmbeddingVector(std::move(v));
  }

  // Deterministic canned replies: parseable when a score is requested, a
  // generic guideline list otherwise.
  std::string complete(const std::string& request) override {
    if (request.empty()) throw Precondition("complete requires a non-empty request");
    if (hooks_.completer) return hooks_.completer(request);
    if (request.find("Score:") != std::string::npos) return "Score: 0.5";
    return "1. Work through the problem one step at a time.\n"
           "2. State every intermediate result explicitly.";
  }

  std::uint64_t seed() const { return seed_; }
  std::size_t embed_dim() const { return embed_dim_; }

 private:
  static std::vector<std::string> default_traces(const std::string& rendered,
                                                 const Problem& problem, int k,
                                                 std::uint64_t seed) {
    const auto rule = parse_rule_problem(problem.statement);
    bool demonstrated = false;
    if (rule) {
      const std::string low_rendered = detail::lowered(rendered);
      const std::string low_statement = detail::lowered(problem.statement);
      demonstrated = count_occurrences(low_rendered, rule->rule) >
                     count_occurrences(low_statement, rule->rule);
    }
    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) {
      const std::uint64_t tag =
          text::splitmix64(text::fnv1a64(rendered) ^ text::splitmix64(seed ^ static_cast<std::uint64_t>(j)) ^
                           text::fnv1a64(problem.id));
      if (rule && demonstrated) {
        out.push_back("Apply the " + rule->rule + " rule to " + std::to_string(rule->lhs) +
                      " and " + std::to_string(rule->rhs) + ".\nThe " + rule->rule +
                      " residue evaluates cleanly (check " + std::to_string(tag % 97) +
                      ").\n#### " + std::to_string(rule->answer));
      } else if (rule) {
        out.push_back("No worked example of the " + rule->rule +
                      " rule is in context, so this is a guess (path " + std::to_string(tag % 97) +
                      ").\n#### " + std::to_string(rule->answer + 13));
      } else {
        out.push_back("Working through the statement step by step (branch " +
                      std::to_string(tag % 89) + ").\n#### " + std::to_string(tag % 1000));
      }
    }
    return out;
  }

  static double default_verifier(const std::string& trace) {
    if (const auto tagged = detail::extract_tag_value(trace, "[[verifier=")) return *tagged;
    if (trace.find("good") != std::string::npos) return 0.9;
    if (trace.find("####") != std::string::npos) return 0.8;
    return 0.25;
  }

  static std::string default_critic(const std::string& trace) {
    if (trace.find("####") != std::string::npos) {
      return "The reasoning commits to a final answer and states its steps explicitly.";
    }
    return "The trace never states a final answer, so the conclusion cannot be checked.";
  }

  static double default_critique_score(const std::string& trace, const std::string& critique) {
    if (const auto tagged = detail::extract_tag_value(trace, "[[crit=")) return *tagged;
    if (critique.find("never states a final answer") != std::string::npos) return 0.3;
    return 0.9;
  }

  Hooks hooks_;
  std::uint64_t seed_ = 0;
  std::size_t embed_dim_ = 64;
  RenderBudget budget_{};
};

// ---------------------------------------------------------------------------
// LLM-backed alternatives to the deterministic guideline distiller and
// retrieval-alignment scorer. Both ride on ModelBackend::complete, so they
// work against the scripted backend in tests and the live backend in runs.
// ---------------------------------------------------------------------------

inline GuidelineDistiller make_llm_distiller(ModelBackend& backend,
                                             std::size_t max_guidelines = 8) {
  return [&backend, max_guidelines](const std::vector<Trajectory>& retrieved,
                                    int /*min_support*/) -> std::vector<std::string> {
    if (retrieved.empty()) return {};
    std::string request =
        "Below are worked solutions to related problems. Summarize the solution patterns that "
        "appear consistently across them as short imperative guidelines, one per line, most "
        "important first. Reply with the guidelines only.\n";
    for (std::size_t i = 0; i < retrieved.size(); ++i) {
      request += "\nSolution " + std::to_string(i + 1) + ":\n" + retrieved[i].trace + "\n";
    }
    std::vector<std::string> out;
    std::istringstream lines(backend.complete(request));
    std::string line;
    while (out.size() < max_guidelines && std::getline(lines, line)) {
      // Strip list markers ("3.", "-", "*") and whitespace.
      std::size_t start = line.find_first_not_of(" \t-*");
      while (start != std::string::npos && start < line.size() &&
             (detail::is_digit(line[start]) || line[start] == '.' || line[start] == ')')) {
        ++start;
      }
      if (start == std::string::npos || start >= line.size()) continue;
      start = line.find_first_not_of(" \t", start);
      if (start == std::string::npos) continue;
      const std::size_t end = line.find_last_not_of(" \t\r");
      if (end == std::string::npos || end < start) continue;
      const std::string guideline = line.substr(start, end - start + 1);
      if (!guideline.empty()) out.push_back(guideline);
    }
    return out;
  };
}

inline AlignmentScorer make_llm_alignment_scorer(ModelBackend& backend) {
  return [&backend](const std::vector<TraceSample>& samples,
                    const std::vector<Trajectory>& retrieved) -> double {
    if (samples.empty()) throw Precondition("alignment scorer requires at least one sample");
    if (retrieved.empty()) return 0.0;
    std::string references;
    for (std::size_t i = 0; i < retrieved.size(); ++i) {
      references += "Reference " + std::to_string(i + 1) + ":\n" + retrieved[i].trace + "\n\n";
    }
    double sum = 0.0;
    for (const auto& sample : samples) {
      const std::string request =
          "Rate how well the reasoning below reuses and references relevant steps from the "
          "reference solutions, from 0 (ignores them) to 1 (explicitly builds on them).\n\n" +
          references + "Reasoning:\n" + sample.trace +
          "\n\nReply with exactly one line of the form:\nScore: <number between 0 and 1>";
      sum += judge_score_with_retry([&] { return backend.complete(request); }, "alignment judge");
    }
    return sum / static_cast<double>(samples.size());
  };
}

}  // namespace raspref
