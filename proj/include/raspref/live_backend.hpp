#pragma once

#include <chrono>
#include <cstdlib>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "raspref/model_backend.hpp"

// Chat-completions HTTP client for the frozen reasoning model, the judge
// rubrics and the embeddings endpoint. Requests carry bearer auth from the
// configured environment variable and are retried with exponential backoff.
// Kept out of model_backend.hpp so offline code never pays for httplib.

namespace raspref {

namespace detail {

struct ParsedEndpoint {
  std::string scheme_host_port;  // e.g. "https://api.openai.com"
  std::string base_path;         // e.g. "" or "/v1"
};

inline ParsedEndpoint parse_endpoint(std::string_view endpoint) {
  std::string e(endpoint);
  while (!e.empty() && e.back() == '/') e.pop_back();
  const auto scheme_end = e.find("://");
  if (scheme_end == std::string::npos) {
    throw BackendUnavailable("endpoint must include a scheme: " + e);
  }
  const auto path_start = e.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {e, ""};
  return {e.substr(0, path_start), e.substr(path_start)};
}

}  // namespace detail

class LiveBackend : public ModelBackend {
 public:
  explicit LiveBackend(BackendSpec spec, GenerationConfig judge_config = {})
      : spec_(std::move(spec)),
        judge_config_(std::move(judge_config)),
        gate_(std::max(1, spec_.max_in_flight)) {
    const auto parsed = detail::parse_endpoint(spec_.endpoint);
    scheme_host_port_ = parsed.scheme_host_port;
    base_path_ = parsed.base_path;
    // The API base path is conventionally /v1; honor an endpoint that
    // already carries it.
    if (base_path_.size() < 3 || base_path_.substr(base_path_.size() - 3) != "/v1") {
      base_path_ += "/v1";
    }
    judge_config_.temperature = 0.0;  // judges should be as deterministic as offered
    judge_config_.max_output_tokens = 64;
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (scheme_host_port_.rfind("https://", 0) == 0) {
      throw BackendUnavailable("endpoint requires TLS but this build has no OpenSSL support");
    }
#endif
  }

  std::vector<TraceSample> generate_traces(const StructuredPrompt& prompt, const Problem& problem,
                                           int k, const GenerationConfig& cfg) override {
    if (k < 1) throw Precondition("generate_traces requires k >= 1");
    problem.validate();
    cfg.validate();
    const auto rendered_prompt = render(prompt, problem, render_budget_of(spec_));
    if (rendered_prompt.examples_dropped > 0) {
      std::cerr << "raspref: dropped " << rendered_prompt.examples_dropped
                << " prompt example(s) to fit the token budget\n";
    }
    const std::string& rendered = rendered_prompt.text;

    std::vector<TraceSample> out;
    for (int attempt = 0; static_cast<int>(out.size()) < k; ++attempt) {
      const int want = k - static_cast<int>(out.size());
      for (auto& content : chat_n(rendered, cfg, want)) {
        if (content.empty()) continue;
        TraceSample s;
        s.trace = std::move(content);
        if (auto c = canonicalize(s.trace)) s.canonical_answer = c->value;
        out.push_back(std::move(s));
      }
      if (static_cast<int>(out.size()) < k && attempt >= spec_.max_retries) {
        throw EmptyCompletion("model returned empty completions after " +
                              std::to_string(attempt + 1) + " attempts");
      }
    }
    return out;
  }

  double verify(const Problem& problem, const std::string& trace) override {
    if (trace.empty()) throw Precondition("verify requires a non-empty trace");
    const std::string request =
        "You are a strict verifier of step-by-step solutions.\n"
        "Rate the plausibility and structural soundness of the reasoning below on a scale from "
        "0 to 1, where 1 means clearly sound and well-structured and 0 means clearly broken.\n\n"
        "Problem:\n" +
        problem.statement + "\n\nReasoning:\n" + trace +
        "\n\nReply with exactly one line of the form:\nScore: <number between 0 and 1>";
    return judge_score_with_retry([&] { return chat_single(request, judge_config_); }, "verifier");
  }

  std::string critique(const Problem& problem, const std::string& trace) override {
    if (trace.empty()) throw Precondition("critique requires a non-empty trace");
    const std::string request =
        "Review the reasoning below for the given problem. Point out the single most "
        "questionable step, or state that the reasoning is sound. Be concise (2-3 sentences).\n\n"
        "Problem:\n" +
        problem.statement + "\n\nReasoning:\n" + trace;
    for (int attempt = 0; attempt <= spec_.max_retries; ++attempt) {
      std::string reply = chat_single(request, judge_config_longer());
      if (!reply.empty()) return reply;
    }
    throw EmptyCompletion("critique requests kept returning empty replies");
  }

  double critique_score(const Problem& problem, const std::string& trace,
                        const std::string& critique) override {
    if (trace.empty() || critique.empty()) {
      throw Precondition("critique_score requires non-empty trace and critique");
    }
    const std::string request =
        "You convert a critique of a reasoning trace into a score.\n"
        "Score 1 if the critique confirms the reasoning is sound, 0 if it identifies a fatal "
        "error, intermediate values for partial concerns.\n\nProblem:\n" +
        problem.statement + "\n\nReasoning:\n" + trace + "\n\nCritique:\n" + critique +
        "\n\nReply with exactly one line of the form:\nScore: <number between 0 and 1>";
    return judge_score_with_retry([&] { return chat_single(request, judge_config_); },
                                  "critique scorer");
  }

  EditSet propose_edits(const StructuredPrompt& prompt, const Problem& problem,
                        const std::vector<TraceSample>& samples,
                        const std::vector<std::string>& critiques,
                        const std::vector<Trajectory>& retrieved) override {
    if (samples.empty()) throw Precondition("propose_edits requires at least one sample");
    if (samples.size() != critiques.size()) {
      throw LengthMismatch("propose_edits: samples and critiques must align");
    }
    const std::string request = edit_request(prompt, problem, samples, critiques, retrieved);
    GenerationConfig cfg = judge_config_longer();
    for (int attempt = 0; attempt < 2; ++attempt) {
      try {
        return parse_edit_reply(chat_single(request, cfg), prompt);
      } catch (const UnparsableEdits&) {
        continue;
      }
    }
    std::cerr << "raspref: edit proposals unparsable after re-ask; stopping refinement early\n";
    return EditSet{};  // empty sentinel: the loop stops early
  }

  std::string complete(const std::string& request) override {
    if (request.empty()) throw Precondition("complete requires a non-empty request");
    return chat_single(request, judge_config_longer());
  }

  EmbeddingVector embed(const std::string& text_in) override {
    if (text_in.empty()) throw Precondition("embed requires non-empty text");
    const nlohmann::json body = {{"model", spec_.embed_model_name}, {"input", text_in}};
    const auto reply = post_json("/embeddings", body);
    try {
      return EmbeddingVector(reply.at("data").at(0).at("embedding").get<std::vector<double>>());
    } catch (const std::exception& e) {
      throw BackendUnavailable(std::string("malformed embeddings response: ") + e.what());
    }
  }

 private:
  GenerationConfig judge_config_longer() const {
    GenerationConfig cfg = judge_config_;
    cfg.max_output_tokens = 512;
    return cfg;
  }

  std::string credential() const {
    const char* value = std::getenv(spec_.credential_env_var.c_str());
    if (!value || !*value) {
      throw BackendUnavailable("credential env var " + spec_.credential_env_var + " is not set");
    }
    return value;
  }

  static std::string edit_request(const StructuredPrompt& prompt, const Problem& problem,
                                  const std::vector<TraceSample>& samples,
                                  const std::vector<std::string>& critiques,
                                  const std::vector<Trajectory>& retrieved) {
    nlohmann::json sample_view = nlohmann::json::array();
    for (std::size_t i = 0; i < samples.size(); ++i) {
      sample_view.push_back({{"answer", samples[i].canonical_answer.value_or("<none>")},
                             {"critique", critiques[i]}});
    }
    std::string request =
        "You revise a structured prompt used to guide a reasoning model. The prompt is a JSON "
        "object with instructions, guidelines and worked examples. Based on the sampled answers "
        "and critiques below, propose targeted edits that improve clarity, structure and error "
        "avoidance.\n\nCurrent prompt:\n" +
        nlohmann::json(prompt).dump(2) + "\n\nProblem:\n" + problem.statement +
        "\n\nSamples:\n" + sample_view.dump(2) + "\n\nRetrieved reference count: " +
        std::to_string(retrieved.size()) +
        "\n\nReply with ONLY a JSON object of the form\n"
        "{\"rationale\": \"...\", \"edits\": [ ... ]}\n"
        "where each edit is one of:\n"
        "{\"op\": \"replace_instructions\", \"text\": \"...\"}\n"
        "{\"op\": \"append_guideline\", \"text\": \"...\"}\n"
        "{\"op\": \"remove_guideline\", \"index\": N}\n"
        "{\"op\": \"replace_example\", \"index\": N, \"problem\": \"...\", \"solution\": \"...\"}\n"
        "{\"op\": \"remove_example\", \"index\": N}\n"
        "{\"op\": \"append_example\", \"problem\": \"...\", \"solution\": \"...\"}\n"
        "Indices refer to the prompt state after the preceding edits. Reply with an empty edits "
        "array if no edit would help.";
    return request;
  }

  // One user-message chat call returning n completions.
  std::vector<std::string> chat_n(const std::string& content, const GenerationConfig& cfg, int n) {
    nlohmann::json body = {{"model", spec_.model_name},
                           {"messages", nlohmann::json::array({nlohmann::json{
                                            {"role", "user"}, {"content", content}}})},
                           {"temperature", cfg.temperature},
                           {"top_p", cfg.top_p},
                           {"max_tokens", cfg.max_output_tokens},
                           {"n", n}};
    if (cfg.seed) body["seed"] = *cfg.seed;
    const auto reply = post_json("/chat/completions", body);
    std::vector<std::string> out;
    try {
      for (const auto& choice : reply.at("choices")) {
        const auto& message = choice.at("message");
        out.push_back(message.value("content", std::string{}));
      }
    } catch (const std::exception& e) {
      throw BackendUnavailable(std::string("malformed chat response: ") + e.what());
    }
    return out;
  }

  std::string chat_single(const std::string& content, const GenerationConfig& cfg) {
    auto replies = chat_n(content, cfg, 1);
    return replies.empty() ? std::string{} : replies.front();
  }

  nlohmann::json post_json(const std::string& path, const nlohmann::json& body) {
    const std::string token = credential();  // fail fast, before any network traffic
    const std::string full_path = base_path_ + path;
    const std::string payload = body.dump();
    for (int attempt = 0;; ++attempt) {
      std::string failure;
      {
        gate_.acquire();
        struct Release {
          std::counting_semaphore<>& gate;
          ~Release() { gate.release(); }
        } release{gate_};

        httplib::Client client(scheme_host_port_);
        client.set_connection_timeout(std::chrono::seconds(10));
        client.set_read_timeout(std::chrono::seconds(180));
        client.set_bearer_token_auth(token);
        auto res = client.Post(full_path, payload, "application/json");
        if (res && res->status == 200) {
          const auto parsed = nlohmann::json::parse(res->body, nullptr, false);
          if (!parsed.is_discarded()) return parsed;
          failure = "unparsable response body";
        } else if (res && res->status != 429 && res->status < 500) {
          throw BackendUnavailable("HTTP " + std::to_string(res->status) + " from " + full_path +
                                   ": " + res->body.substr(0, 256));
        } else if (res) {
          failure = "HTTP " + std::to_string(res->status);
        } else {
          failure = "transport error: " + httplib::to_string(res.error());
        }
      }
      if (attempt >= spec_.max_retries) {
        throw BackendUnavailable(failure + " after " + std::to_string(attempt + 1) + " attempts");
      }
      const auto delay = std::chrono::milliseconds(500) * (1LL << attempt);
      std::this_thread::sleep_for(delay);
    }
  }

  BackendSpec spec_;
  GenerationConfig judge_config_;
  std::string scheme_host_port_;
  std::string base_path_;
  std::counting_semaphore<> gate_;
};

}  // namespace raspref
