#include <doctest.h>

#include <optional>
#include <string>
#include <vector>

#include "raspref/domain.hpp"
#include "raspref/text.hpp"

using namespace raspref;
using nlohmann::json;

namespace {

template <class T>
T roundtrip(const T& value) {
  const std::string dumped = json(value).dump();
  return json::parse(dumped).get<T>();
}

std::string random_word(text::SplitMix64& rng) {
  std::string out;
  const std::size_t len = 1 + rng.next_below(8);
  for (std::size_t i = 0; i < len; ++i) {
    out.push_back(static_cast<char>('a' + rng.next_below(26)));
  }
  return out;
}

Problem random_problem(text::SplitMix64& rng) {
  Problem p;
  p.id = random_word(rng);
  p.statement = random_word(rng) + " " + random_word(rng) + "?";
  if (rng.next_below(2)) p.reference_answer = std::to_string(rng.next_below(1000));
  return p;
}

StructuredPrompt random_prompt(text::SplitMix64& rng) {
  StructuredPrompt p;
  p.instructions = random_word(rng) + " " + random_word(rng);
  for (std::uint64_t i = 0, n = rng.next_below(4); i < n; ++i) {
    p.guidelines.push_back(random_word(rng));
  }
  for (std::uint64_t i = 0, n = rng.next_below(4); i < n; ++i) {
    p.examples.push_back({random_word(rng), random_word(rng)});
  }
  p.revision = static_cast<int>(rng.next_below(7));
  return p;
}

Trajectory random_trajectory(text::SplitMix64& rng) {
  Trajectory t;
  t.problem = random_problem(rng);
  t.prompt = random_prompt(rng);
  t.trace = random_word(rng) + "\n#### " + std::to_string(rng.next_below(100));
  if (rng.next_below(2)) t.reward = rng.next_unit();
  if (rng.next_below(2)) t.consistency = rng.next_unit();
  if (rng.next_below(2)) t.verifier = rng.next_unit();
  if (rng.next_below(2)) {
    std::vector<double> v(4);
    for (auto& x : v) x = rng.next_unit() * 2.0 - 1.0;
    t.embedding = std::move(v);
  }
  return t;
}

}  // namespace

TEST_CASE("every domain type round-trips through JSON bit-exactly") {
  text::SplitMix64 rng(2024);
  for (int iter = 0; iter < 200; ++iter) {
    const auto problem = random_problem(rng);
    CHECK(roundtrip(problem) == problem);

    const auto prompt = random_prompt(rng);
    CHECK(roundtrip(prompt) == prompt);

    TraceSample sample;
    sample.trace = random_word(rng);
    if (rng.next_below(2)) sample.canonical_answer = std::to_string(rng.next_below(50));
    if (rng.next_below(2)) sample.verifier_score = rng.next_unit();
    if (rng.next_below(2)) sample.critique = random_word(rng);
    CHECK(roundtrip(sample) == sample);

    const auto trajectory = random_trajectory(rng);
    CHECK(roundtrip(trajectory) == trajectory);

    QualityWeights w{rng.next_unit() + 0.01, rng.next_unit(), rng.next_unit(), rng.next_unit()};
    CHECK(roundtrip(w) == w);

    QualityReport r{rng.next_unit(), rng.next_unit(), rng.next_unit(), rng.next_unit(), 0.0,
                    2 + static_cast<int>(rng.next_below(5))};
    r.q = (r.c_cons + r.c_ver + r.c_crit + r.c_ret) / 4.0;
    CHECK(roundtrip(r) == r);
  }
}

TEST_CASE("EditSet round-trips every operation kind") {
  EditSet edits;
  edits.rationale = "tighten the structure";
  edits.ops = {
      ReplaceInstructions{"solve it carefully"},
      AppendGuideline{"check units"},
      RemoveGuideline{2},
      ReplaceExample{1, {"problem text", "solution text"}},
      RemoveExample{0},
      AppendExample{{"p", "s"}},
  };
  CHECK(roundtrip(edits) == edits);

  EditSet sentinel;  // empty edit sets are representable (loop stop sentinel)
  CHECK(roundtrip(sentinel) == sentinel);
}

TEST_CASE("unknown edit ops fail to parse") {
  const auto j = json::parse(R"({"edits": [{"op": "rewrite_everything"}], "rationale": ""})");
  CHECK_THROWS_AS(j.get<EditSet>(), ParseError);
}

TEST_CASE("out-of-range score fields are rejected at construction") {
  const char* bad_sample = R"({"trace": "t", "verifier_score": 1.5})";
  CHECK_THROWS_AS(json::parse(bad_sample).get<TraceSample>(), OutOfRange);

  TraceSample s;
  s.trace = "t";
  s.verifier_score = -0.25;
  CHECK_THROWS_AS(s.validate(), OutOfRange);

  Trajectory t;
  t.problem = {"id", "stmt", std::nullopt};
  t.trace = "x";
  t.consistency = 2.0;
  CHECK_THROWS_AS(t.validate(), OutOfRange);

  QualityWeights zero{0, 0, 0, 0};
  CHECK_THROWS_AS(zero.validate(), ZeroWeightSum);
  QualityWeights negative{-1, 1, 1, 1};
  CHECK_THROWS_AS(negative.validate(), OutOfRange);

  QualityReport r{0.5, 0.5, 0.5, 0.5, 0.5, 1};
  CHECK_THROWS_AS(r.validate(), OutOfRange);  // k_used < 2

  Problem p{"id", "", std::nullopt};
  CHECK_THROWS_AS(p.validate(), Precondition);
}

TEST_CASE("optional fields are omitted from serialized form when absent") {
  Problem p{"id", "statement", std::nullopt};
  const json j = p;
  CHECK(!j.contains("reference_answer"));

  Trajectory t;
  t.problem = p;
  t.trace = "x";
  const json tj = t;
  CHECK(!tj.contains("embedding"));
  CHECK(!tj.contains("reward"));
}
