#pragma once

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "raspref/domain.hpp"
#include "raspref/errors.hpp"
#include "raspref/model_backend.hpp"
#include "raspref/refine_loop.hpp"
#include "raspref/scoring.hpp"
#include "raspref/trajectory_store.hpp"

// Dataset ingestion, store seeding, and the static / retrieval / refined
// evaluation arms with answer grading and report emission.

namespace raspref {

enum class EvalSetting { static_prompt, retrieval, refined };

inline std::string to_string(EvalSetting s) {
  switch (s) {
    case EvalSetting::static_prompt:
      return "static";
    case EvalSetting::retrieval:
      return "retrieval";
    default:
      return "refined";
  }
}

inline EvalSetting eval_setting_from_string(std::string_view s) {
  if (s == "static") return EvalSetting::static_prompt;
  if (s == "retrieval") return EvalSetting::retrieval;
  if (s == "refined") return EvalSetting::refined;
  throw ParseError("unknown eval setting: " + std::string(s));
}

struct EvalItem {
  std::string problem_id;
  std::optional<std::string> predicted;
  std::optional<std::string> reference;
  bool match = false;
  std::optional<double> q;
  std::optional<std::string> error;
  std::optional<std::string> rendered_prompt;

  bool operator==(const EvalItem&) const = default;
};

inline void to_json(nlohmann::json& j, const EvalItem& item) {
  j = nlohmann::json{{"problem_id", item.problem_id}, {"match", item.match}};
  detail::put_optional(j, "predicted", item.predicted);
  detail::put_optional(j, "reference", item.reference);
  detail::put_optional(j, "q", item.q);
  detail::put_optional(j, "error", item.error);
  detail::put_optional(j, "rendered_prompt", item.rendered_prompt);
}

inline void from_json(const nlohmann::json& j, EvalItem& item) {
  item.problem_id = j.at("problem_id").get<std::string>();
  item.match = j.at("match").get<bool>();
  detail::get_optional(j, "predicted", item.predicted);
  detail::get_optional(j, "reference", item.reference);
  detail::get_optional(j, "q", item.q);
  detail::get_optional(j, "error", item.error);
  detail::get_optional(j, "rendered_prompt", item.rendered_prompt);
}

struct EvalResult {
  EvalSetting setting = EvalSetting::static_prompt;
  std::size_t n = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
  std::vector<EvalItem> per_item;

  bool operator==(const EvalResult&) const = default;
};

inline void to_json(nlohmann::json& j, const EvalResult& r) {
  j = nlohmann::json{{"setting", to_string(r.setting)},
                     {"n", r.n},
                     {"correct", r.correct},
                     {"accuracy", r.accuracy},
                     {"per_item", r.per_item}};
}

inline void from_json(const nlohmann::json& j, EvalResult& r) {
  r.setting = eval_setting_from_string(j.at("setting").get<std::string>());
  r.n = j.at("n").get<std::size_t>();
  r.correct = j.at("correct").get<std::size_t>();
  r.accuracy = j.at("accuracy").get<double>();
  r.per_item = j.at("per_item").get<std::vector<EvalItem>>();
}

// One dataset line: the problem plus, when present, its worked solution text
// (used by seeding as the ingested trace).
struct DatasetItem {
  Problem problem;
  std::optional<std::string> solution_text;
};

// Loads a JSONL dataset. Two line shapes are accepted:
//   {"question": ..., "answer": ...}            (GSM8K convention)
//   {"id": ..., "statement": ..., "reference_answer"?: ..., "solution"?: ...}
// Reference answers are canonicalized at load time.
inline std::vector<DatasetItem> load_dataset_items(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open dataset: " + path.string());
  std::vector<DatasetItem> out;
  std::unordered_set<std::string> seen_ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.filename().string() + " line " + std::to_string(lineno);
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw ParseError(where + ": invalid JSON");

    DatasetItem item;
    try {
      if (j.contains("question")) {
        if (!j.contains("answer")) throw MissingField(where + ": missing field 'answer'");
        item.problem.statement = j.at("question").get<std::string>();
        item.problem.id =
            j.contains("id") ? j.at("id").get<std::string>() : "item-" + std::to_string(lineno);
        const auto answer_text = j.at("answer").get<std::string>();
        if (const auto canon = canonicalize(answer_text)) {
          item.problem.reference_answer = canon->value;
        }
        item.solution_text = answer_text;
      } else {
        if (!j.contains("id")) throw MissingField(where + ": missing field 'id'");
        if (!j.contains("statement")) throw MissingField(where + ": missing field 'statement'");
        item.problem.id = j.at("id").get<std::string>();
        item.problem.statement = j.at("statement").get<std::string>();
        if (j.contains("reference_answer")) {
          const auto text = j.at("reference_answer").get<std::string>();
          const auto canon = canonicalize(text);
          item.problem.reference_answer = canon ? canon->value : text;
        }
        if (j.contains("solution")) item.solution_text = j.at("solution").get<std::string>();
      }
      item.problem.validate();
    } catch (const MissingField&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(where + ": " + e.what());
    }
    if (!seen_ids.insert(item.problem.id).second) {
      throw ParseError(where + ": duplicate problem id '" + item.problem.id + "'");
    }
    out.push_back(std::move(item));
  }
  if (out.empty()) throw ParseError("dataset is empty: " + path.string());
  return out;
}

inline std::vector<Problem> load_dataset(const std::filesystem::path& path) {
  std::vector<Problem> out;
  for (auto& item : load_dataset_items(path)) out.push_back(std::move(item.problem));
  return out;
}

// Deterministic Fisher-Yates, independent of the standard library's shuffle.
inline void shuffle_problems(std::vector<Problem>& problems, std::uint64_t seed) {
  text::SplitMix64 rng(seed);
  for (std::size_t i = problems.size(); i > 1; --i) {
    std::swap(problems[i - 1], problems[rng.next_below(i)]);
  }
}

// Seeds the store from the first n training items: items carrying a worked
// solution are ingested directly as the trace; the rest are solved once with
// the base prompt. Every record gets a statement embedding.
inline void seed_store(const std::filesystem::path& train_path, TrajectoryStore& store,
                       ModelBackend& backend, std::size_t n,
                       const StructuredPrompt& base_prompt = default_base_prompt(),
                       const GenerationConfig& generation = {}, std::uint64_t seed = 0) {
  if (n == 0) return;
  const auto items = load_dataset_items(train_path);
  if (n > items.size()) {
    throw Precondition("seed_store: requested " + std::to_string(n) + " items but " +
                       train_path.filename().string() + " has " + std::to_string(items.size()));
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& item = items[i];
    Trajectory t;
    t.problem = {item.problem.id, item.problem.statement, std::nullopt};
    t.prompt = base_prompt;
    if (item.solution_text && !item.solution_text->empty()) {
      t.trace = *item.solution_text;
    } else {
      GenerationConfig gen = generation;
      gen.seed = text::splitmix64(seed ^ text::splitmix64(i));
      const auto samples = backend.generate_traces(base_prompt, item.problem, 1, gen);
      t.trace = samples.front().trace;
      t.verifier = backend.verify(item.problem, t.trace);
    }
    t.embedding = backend.embed(item.problem.statement).values();
    store.append(t);
  }
}

// Majority canonical answer over the final samples; ties break toward the
// higher summed verifier score, then the lexicographically smaller answer.
inline std::optional<std::string> majority_answer(const std::vector<TraceSample>& samples) {
  struct Tally {
    std::size_t count = 0;
    double verifier_sum = 0.0;
  };
  std::map<std::string, Tally> tallies;
  for (const auto& s : samples) {
    if (!s.canonical_answer) continue;
    auto& t = tallies[*s.canonical_answer];
    ++t.count;
    t.verifier_sum += s.verifier_score.value_or(0.0);
  }
  if (tallies.empty()) return std::nullopt;
  const std::string* best = nullptr;
  const Tally* best_tally = nullptr;
  for (const auto& [answer, tally] : tallies) {
    if (!best || tally.count > best_tally->count ||
        (tally.count == best_tally->count && tally.verifier_sum > best_tally->verifier_sum)) {
      best = &answer;
      best_tally = &tally;
    }
  }
  return *best;
}

struct EvalOptions {
  EvalSetting setting = EvalSetting::retrieval;
  RefineConfig refine{};
  int workers = 1;
  bool capture_prompts = false;
  std::optional<std::filesystem::path> run_dir;  // per-item round logs, JSONL
};

namespace detail {

// Problem ids come from arbitrary dataset files; log filenames cannot.
inline std::string log_file_name(const std::string& problem_id) {
  std::string out;
  out.reserve(problem_id.size());
  for (char c : problem_id) {
    const bool safe = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                      (c >= '0' && c <= '9') || c == '-' || c == '_' || c == '.';
    out.push_back(safe ? c : '_');
  }
  if (out.empty()) out = "item";
  return out + ".jsonl";
}

}  // namespace detail

// Runs one evaluation arm. The store is never written during grading; static
// and retrieval arms force R=0, the refined arm keeps the configured rounds.
// Items are independent: a per-item seed fixed by index makes parallel and
// serial runs grade identically, and per-item backend failures are recorded
// rather than aborting the run.
inline EvalResult evaluate(const std::vector<Problem>& problems, TrajectoryStore& store,
                           ModelBackend& backend, const EvalOptions& options) {
  if (problems.empty()) throw Precondition("evaluate requires a non-empty problem list");
  RefineConfig base_cfg = options.refine;
  base_cfg.write_back = false;
  switch (options.setting) {
    case EvalSetting::static_prompt:
      base_cfg.use_retrieval = false;
      base_cfg.rounds_max = 0;
      break;
    case EvalSetting::retrieval:
      base_cfg.use_retrieval = true;
      base_cfg.rounds_max = 0;
      break;
    case EvalSetting::refined:
      base_cfg.use_retrieval = true;
      break;
  }
  if (options.run_dir) std::filesystem::create_directories(*options.run_dir);

  EvalResult result;
  result.setting = options.setting;
  result.n = problems.size();
  result.per_item.resize(problems.size());

  auto run_item = [&](std::size_t i) {
    const Problem& problem = problems[i];
    EvalItem& item = result.per_item[i];
    item.problem_id = problem.id;
    item.reference = problem.reference_answer;
    RefineConfig cfg = base_cfg;
    cfg.seed = text::splitmix64(base_cfg.seed ^ text::splitmix64(i));
    try {
      const RefineResult refined = refine(problem, store, backend, cfg);
      item.predicted = majority_answer(refined.final_samples);
      item.q = refined.final_report.q;
      if (options.capture_prompts) {
        item.rendered_prompt = render(refined.prompt, problem).text;
      }
      if (options.run_dir) {
        std::ofstream log(*options.run_dir / detail::log_file_name(problem.id),
                          std::ios::binary);
        log << nlohmann::json{{"problem_id", problem.id},
                              {"baseline_report", refined.baseline_report}}
                   .dump()
            << '\n';
        for (const auto& round : refined.rounds) log << nlohmann::json(round).dump() << '\n';
      }
      item.match = item.predicted && item.reference && *item.predicted == *item.reference;
    } catch (const std::exception& e) {
      item.error = e.what();
      item.match = false;
    }
  };

  const int workers = std::max(1, options.workers);
  if (workers == 1 || problems.size() == 1) {
    for (std::size_t i = 0; i < problems.size(); ++i) run_item(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    const std::size_t thread_count =
        std::min<std::size_t>(static_cast<std::size_t>(workers), problems.size());
    pool.reserve(thread_count);
    for (std::size_t t = 0; t < thread_count; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < problems.size(); i = next.fetch_add(1)) {
          run_item(i);
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  for (const auto& item : result.per_item) {
    if (item.match) ++result.correct;
  }
  result.accuracy = static_cast<double>(result.correct) / static_cast<double>(result.n);
  return result;
}

inline void write_report_json(const std::filesystem::path& path, const EvalResult& result) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw StorageFailure("cannot write report: " + path.string());
  out << nlohmann::json(result).dump(2) << '\n';
  if (!out) throw StorageFailure("write failed: " + path.string());
}

namespace detail {

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += '"';
  return out;
}

}  // namespace detail

inline void write_report_csv(const std::filesystem::path& path, const EvalResult& result) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw StorageFailure("cannot write report: " + path.string());
  out << "problem_id,predicted,reference,match,q,error\n";
  for (const auto& item : result.per_item) {
    out << detail::csv_escape(item.problem_id) << ','
        << detail::csv_escape(item.predicted.value_or("")) << ','
        << detail::csv_escape(item.reference.value_or("")) << ','
        << (item.match ? "true" : "false") << ',';
    if (item.q) out << *item.q;
    out << ',' << detail::csv_escape(item.error.value_or("")) << '\n';
  }
  if (!out) throw StorageFailure("write failed: " + path.string());
}

}  // namespace raspref
