#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "raspref/domain.hpp"
#include "raspref/errors.hpp"
#include "raspref/model_backend.hpp"
#include "raspref/prompt_engine.hpp"
#include "raspref/scoring.hpp"
#include "raspref/trajectory_store.hpp"

// Per-input refinement: retrieve related trajectories, build the initial
// prompt, then repeatedly sample, score, and apply proposed edits, keeping an
// edit only while it strictly improves the aggregate quality score. On
// completion the best trace is written back to the store.

namespace raspref {

struct RefineConfig {
  int rounds_max = 3;   // R
  int samples_k = 5;    // K
  int retrieval_k = 5;  // top-k retrieved trajectories
  std::size_t max_examples = kDefaultMaxExamples;
  int distill_min_support = kDefaultMinSupport;
  QualityWeights weights{};
  GenerationConfig generation{};
  std::uint64_t seed = 0;
  StructuredPrompt base_prompt = default_base_prompt();
  std::optional<double> min_verifier;  // optional retrieval filter, off by default
  bool use_retrieval = true;
  bool write_back = true;
  GuidelineDistiller distiller;       // unset: deterministic pattern mining
  AlignmentScorer alignment_scorer;   // unset: deterministic content-word overlap

  void validate() const {
    if (rounds_max < 0) throw OutOfRange("RefineConfig.rounds_max must be >= 0");
    if (samples_k < 2) throw OutOfRange("RefineConfig.samples_k must be >= 2");
    if (retrieval_k < 1) throw OutOfRange("RefineConfig.retrieval_k must be >= 1");
    weights.validate();
    generation.validate();
    base_prompt.validate();
  }
};

struct RoundRecord {
  int round = 0;
  int prompt_revision = 0;
  QualityReport report{};
  std::optional<std::string> edit_rationale;
  bool accepted = false;

  bool operator==(const RoundRecord&) const = default;
};

inline void to_json(nlohmann::json& j, const RoundRecord& r) {
  j = nlohmann::json{{"round", r.round},
                     {"prompt_revision", r.prompt_revision},
                     {"report", r.report},
                     {"accepted", r.accepted}};
  detail::put_optional(j, "edit_rationale", r.edit_rationale);
}

inline void from_json(const nlohmann::json& j, RoundRecord& r) {
  r.round = j.at("round").get<int>();
  r.prompt_revision = j.at("prompt_revision").get<int>();
  r.report = j.at("report").get<QualityReport>();
  r.accepted = j.at("accepted").get<bool>();
  detail::get_optional(j, "edit_rationale", r.edit_rationale);
}

struct RefineResult {
  StructuredPrompt prompt;                 // best prompt found
  std::vector<RoundRecord> rounds;         // one record per edit round; baseline-only when R=0
  std::vector<TraceSample> final_samples;  // the K samples drawn under the returned prompt
  QualityReport final_report{};            // report of the returned prompt
  QualityReport baseline_report{};         // report of the initial prompt p(0)
  bool partial = false;                    // a mid-loop backend failure cut the run short
  std::size_t quality_evaluations = 0;

  bool operator==(const RefineResult&) const = default;
};

inline void to_json(nlohmann::json& j, const RefineResult& r) {
  j = nlohmann::json{{"prompt", r.prompt},
                     {"rounds", r.rounds},
                     {"final_samples", r.final_samples},
                     {"final_report", r.final_report},
                     {"baseline_report", r.baseline_report},
                     {"partial", r.partial},
                     {"quality_evaluations", r.quality_evaluations}};
}

namespace detail {

struct PromptEvaluation {
  std::vector<TraceSample> samples;
  std::vector<std::string> critiques;
  QualityReport report;
};

// One quality evaluation: K samples, per-sample verifier/critique feedback,
// aggregated report. The per-round seed keeps scripted runs reproducible
// while still varying samples across rounds.
inline PromptEvaluation evaluate_prompt(ModelBackend& backend, const StructuredPrompt& prompt,
                                        const Problem& problem,
                                        const std::vector<Trajectory>& retrieved,
                                        const RefineConfig& cfg, int round) {
  GenerationConfig gen = cfg.generation;
  gen.seed = text::splitmix64(cfg.seed ^ text::splitmix64(static_cast<std::uint64_t>(round)));
  PromptEvaluation out;
  out.samples = backend.generate_traces(prompt, problem, cfg.samples_k, gen);
  std::vector<double> critique_scores;
  critique_scores.reserve(out.samples.size());
  for (auto& sample : out.samples) {
    sample.verifier_score = backend.verify(problem, sample.trace);
    sample.critique = backend.critique(problem, sample.trace);
    out.critiques.push_back(*sample.critique);
    critique_scores.push_back(backend.critique_score(problem, sample.trace, *sample.critique));
  }
  ComponentScores components;
  components.c_cons = consistency(out.samples);
  components.c_ver = verifier_mean(out.samples);
  components.c_crit = critique_mean(out.samples, critique_scores);
  components.c_ret = cfg.alignment_scorer ? cfg.alignment_scorer(out.samples, retrieved)
                                          : retrieval_alignment(out.samples, retrieved);
  QualityWeights weights = cfg.weights;
  if (retrieved.empty()) weights.delta = 0.0;  // cold start: drop the retrieval term
  out.report = quality(components, weights, static_cast<int>(out.samples.size()));
  return out;
}

}  // namespace detail

inline RefineResult refine(const Problem& problem, TrajectoryStore& store, ModelBackend& backend,
                           const RefineConfig& cfg) {
  cfg.validate();
  problem.validate();

  // Step 1: retrieve. The query embeds the new problem statement only.
  std::optional<EmbeddingVector> query_embedding;
  std::vector<Trajectory> retrieved;
  if (cfg.use_retrieval && store.size() > 0) {
    query_embedding = backend.embed(problem.statement);
    retrieved = store.retrieve(*query_embedding, static_cast<std::size_t>(cfg.retrieval_k),
                               cfg.min_verifier);
  }

  // Step 2: initial prompt.
  StructuredPrompt prompt =
      cfg.distiller ? build_prompt_with_guidelines(cfg.base_prompt, retrieved,
                                                   cfg.distiller(retrieved, cfg.distill_min_support),
                                                   cfg.max_examples)
                    : build_prompt(cfg.base_prompt, retrieved, cfg.max_examples,
                                   cfg.distill_min_support);

  RefineResult result;

  // Baseline evaluation; failures here propagate to the caller.
  detail::PromptEvaluation current =
      detail::evaluate_prompt(backend, prompt, problem, retrieved, cfg, 0);
  result.quality_evaluations = 1;
  result.baseline_report = current.report;

  // Steps 3-4: iterate edits while they strictly improve q.
  try {
    for (int round = 0; round < cfg.rounds_max; ++round) {
      EditSet edits =
          backend.propose_edits(prompt, problem, current.samples, current.critiques, retrieved);
      if (edits.ops.empty()) break;  // editor had nothing useful: stop early

      StructuredPrompt next;
      try {
        next = apply_edits(prompt, edits);
      } catch (const InvalidEditIndex&) {
        break;  // treat like the unparsable-edit sentinel
      }

      detail::PromptEvaluation next_eval =
          detail::evaluate_prompt(backend, next, problem, retrieved, cfg, round + 1);
      ++result.quality_evaluations;

      const bool accepted = next_eval.report.q > current.report.q;
      RoundRecord record;
      record.round = round;
      record.prompt_revision = next.revision;
      record.report = next_eval.report;
      if (!edits.rationale.empty()) record.edit_rationale = edits.rationale;
      record.accepted = accepted;
      result.rounds.push_back(std::move(record));

      if (!accepted) break;  // q(p(r+1)) <= q(p(r)): discard the edit and stop
      prompt = std::move(next);
      current = std::move(next_eval);
    }
  } catch (const Error&) {
    // Mid-loop backend failure: return the best prompt found so far and do
    // not touch the store.
    result.partial = true;
  }

  if (result.rounds.empty()) {
    RoundRecord baseline;
    baseline.round = 0;
    baseline.prompt_revision = prompt.revision;
    baseline.report = current.report;
    baseline.accepted = true;
    result.rounds.push_back(std::move(baseline));
  }

  result.prompt = prompt;
  result.final_report = current.report;
  result.final_samples = current.samples;

  // Step 5: write back one trajectory: the highest-verifier trace under the
  // returned prompt, with its feedback scores. Labels never enter the store.
  if (!result.partial && cfg.write_back) {
    const TraceSample* best = nullptr;
    for (const auto& sample : result.final_samples) {
      if (!best || sample.verifier_score.value_or(0.0) > best->verifier_score.value_or(0.0)) {
        best = &sample;
      }
    }
    if (best) {
      if (!query_embedding) query_embedding = backend.embed(problem.statement);
      Trajectory t;
      t.problem = {problem.id, problem.statement, std::nullopt};
      t.prompt = result.prompt;
      t.trace = best->trace;
      t.consistency = result.final_report.c_cons;
      t.verifier = best->verifier_score;
      t.embedding = query_embedding->values();
      store.append(t);
    }
  }
  return result;
}

}  // namespace raspref
