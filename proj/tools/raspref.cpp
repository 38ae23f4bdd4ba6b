// raspref CLI: seed a trajectory store from training data and evaluate the
// static / retrieval / refined prompting arms over a dataset.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "raspref/raspref.hpp"

namespace {

using namespace raspref;

struct AppConfig {
  BackendSpec backend{};
  GenerationConfig generation{};
  QualityWeights weights{};
  int rounds = 3;
  int samples_k = 5;
  int retrieval_k = 5;
  std::size_t max_examples = 5;
  std::uint64_t seed = 17;
  std::optional<double> min_verifier;
  std::string store_path = "trajectories.jsonl";
  std::string base_instructions = default_base_prompt().instructions;
  bool llm_distiller = false;
  bool llm_alignment = false;
};

AppConfig load_config(const std::string& path) {
  AppConfig cfg;
  if (path.empty()) return cfg;
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config: " + path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ParseError("config is not valid JSON: " + path);
  if (j.contains("backend")) cfg.backend = j.at("backend").get<BackendSpec>();
  if (j.contains("generation")) cfg.generation = j.at("generation").get<GenerationConfig>();
  if (j.contains("weights")) cfg.weights = j.at("weights").get<QualityWeights>();
  cfg.rounds = j.value("rounds", cfg.rounds);
  cfg.samples_k = j.value("samples_k", cfg.samples_k);
  cfg.retrieval_k = j.value("retrieval_k", cfg.retrieval_k);
  cfg.max_examples = j.value("max_examples", cfg.max_examples);
  cfg.seed = j.value("seed", cfg.seed);
  if (j.contains("min_verifier_score") && !j.at("min_verifier_score").is_null()) {
    cfg.min_verifier = j.at("min_verifier_score").get<double>();
  }
  cfg.store_path = j.value("store", cfg.store_path);
  cfg.base_instructions = j.value("base_instructions", cfg.base_instructions);
  cfg.llm_distiller = j.value("llm_distiller", cfg.llm_distiller);
  cfg.llm_alignment = j.value("llm_alignment", cfg.llm_alignment);
  return cfg;
}

std::unique_ptr<ModelBackend> make_backend(const AppConfig& cfg) {
  if (cfg.backend.kind == BackendKind::scripted) {
    return std::make_unique<ScriptedBackend>(cfg.seed, cfg.backend.scripted_embed_dim,
                                             render_budget_of(cfg.backend));
  }
  return std::make_unique<LiveBackend>(cfg.backend);
}

RefineConfig make_refine_config(const AppConfig& cfg) {
  RefineConfig rc;
  rc.rounds_max = cfg.rounds;
  rc.samples_k = cfg.samples_k;
  rc.retrieval_k = cfg.retrieval_k;
  rc.max_examples = cfg.max_examples;
  rc.weights = cfg.weights;
  rc.generation = cfg.generation;
  rc.seed = cfg.seed;
  rc.min_verifier = cfg.min_verifier;
  rc.base_prompt.instructions = cfg.base_instructions;
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"raspref: retrieval-augmented self-supervised prompt refinement"};
  app.require_subcommand(1);

  std::string config_path;
  std::string backend_name;
  std::string store_path;
  std::uint64_t seed = 0;
  bool seed_set = false;

  app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);

  // seed ----------------------------------------------------------------
  auto* seed_cmd = app.add_subcommand("seed", "Seed the trajectory store from training data");
  std::string train_path;
  std::size_t seed_n = 200;
  seed_cmd->add_option("--train", train_path, "Training dataset (JSONL)")
      ->required()
      ->check(CLI::ExistingFile);
  seed_cmd->add_option("--n", seed_n, "Number of training items to ingest (default 200)");
  seed_cmd->add_option("--store", store_path, "Trajectory store path");
  seed_cmd->add_option("--backend", backend_name, "scripted|live");
  seed_cmd->add_option("--seed", seed, "Random seed")->each([&](const std::string&) {
    seed_set = true;
  });

  // eval ----------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a dataset under one prompting arm");
  std::string data_path, setting_name = "retrieval", out_path, csv_path, run_dir;
  int retrieval_k = -1, samples_k = -1, rounds = -1, workers = 1;
  std::size_t limit_n = 0;
  double min_verifier = -1.0;
  std::optional<std::uint64_t> shuffle_seed;
  bool capture_prompts = false;
  eval_cmd->add_option("--data", data_path, "Evaluation dataset (JSONL)")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--setting", setting_name, "static|retrieval|refined")
      ->check(CLI::IsMember({"static", "retrieval", "refined"}));
  eval_cmd->add_option("--k", retrieval_k, "Retrieval top-k (default 5)");
  eval_cmd->add_option("--K", samples_k, "Samples per quality evaluation (default 5)");
  eval_cmd->add_option("--rounds", rounds, "Max refinement rounds for the refined arm (default 3)");
  eval_cmd->add_option("--seed", seed, "Random seed")->each([&](const std::string&) {
    seed_set = true;
  });
  eval_cmd->add_option("--backend", backend_name, "scripted|live");
  eval_cmd->add_option("--store", store_path, "Trajectory store path");
  eval_cmd->add_option("--out", out_path, "JSON report path");
  eval_cmd->add_option("--csv", csv_path, "CSV report path");
  eval_cmd->add_option("--n", limit_n, "Evaluate only the first n items");
  eval_cmd->add_option("--workers", workers, "Parallel item workers (default 1)");
  eval_cmd->add_option("--shuffle-seed",
                       [&shuffle_seed](const std::vector<std::string>& v) {
                         try {
                           shuffle_seed = std::stoull(v.at(0));
                           return true;
                         } catch (const std::exception&) {
                           return false;
                         }
                       },
                       "Shuffle the dataset deterministically before taking the first n");
  eval_cmd->add_option("--min-verifier-score", min_verifier,
                       "Retrieval filter: drop stored trajectories below this verifier score");
  eval_cmd->add_option("--run-dir", run_dir, "Directory for per-item round logs");
  eval_cmd->add_flag("--capture-prompts", capture_prompts,
                     "Record each item's rendered prompt in the report");

  CLI11_PARSE(app, argc, argv);

  try {
    AppConfig cfg = load_config(config_path);
    if (!backend_name.empty()) cfg.backend.kind = backend_kind_from_string(backend_name);
    if (!store_path.empty()) cfg.store_path = store_path;
    if (seed_set) cfg.seed = seed;

    if (seed_cmd->parsed()) {
      auto backend = make_backend(cfg);
      TrajectoryStore store(cfg.store_path);
      const std::size_t before = store.size();
      StructuredPrompt base = default_base_prompt();
      base.instructions = cfg.base_instructions;
      seed_store(train_path, store, *backend, seed_n, base, cfg.generation, cfg.seed);
      std::cout << "seeded " << (store.size() - before) << " trajectories into " << cfg.store_path
                << " (store size " << store.size() << ")\n";
      return 0;
    }

    // eval
    if (retrieval_k > 0) cfg.retrieval_k = retrieval_k;
    if (samples_k > 0) cfg.samples_k = samples_k;
    if (rounds >= 0) cfg.rounds = rounds;
    if (min_verifier >= 0.0) cfg.min_verifier = min_verifier;

    auto backend = make_backend(cfg);
    TrajectoryStore store(cfg.store_path);
    auto problems = load_dataset(data_path);
    if (shuffle_seed) shuffle_problems(problems, *shuffle_seed);
    if (limit_n > 0 && limit_n < problems.size()) problems.resize(limit_n);

    EvalOptions options;
    options.setting = eval_setting_from_string(setting_name);
    options.refine = make_refine_config(cfg);
    if (cfg.llm_distiller) options.refine.distiller = make_llm_distiller(*backend);
    if (cfg.llm_alignment) options.refine.alignment_scorer = make_llm_alignment_scorer(*backend);
    options.workers = workers;
    options.capture_prompts = capture_prompts;
    if (!run_dir.empty()) options.run_dir = run_dir;

    const auto result = evaluate(problems, store, *backend, options);
    std::cout << "setting=" << to_string(result.setting) << " n=" << result.n
              << " correct=" << result.correct << " accuracy=" << result.accuracy << "\n";
    if (!out_path.empty()) {
      write_report_json(out_path, result);
      std::cout << "wrote " << out_path << "\n";
    }
    if (!csv_path.empty()) {
      write_report_csv(csv_path, result);
      std::cout << "wrote " << csv_path << "\n";
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "raspref: " << e.what() << "\n";
    return 1;
  }
}
