#include <doctest.h>

#include <string>
#include <vector>

#include "raspref/prompt_engine.hpp"
#include "raspref/text.hpp"

using namespace raspref;

namespace {

Trajectory traj(const std::string& id, const std::string& statement, const std::string& trace) {
  Trajectory t;
  t.problem = {id, statement, std::nullopt};
  t.trace = trace;
  return t;
}

StructuredPrompt base_prompt() {
  StructuredPrompt p;
  p.instructions = "Reason step by step and finish with #### <answer>.";
  return p;
}

}  // namespace

TEST_CASE("build_prompt with empty retrieval reduces to the base prompt") {
  auto base = base_prompt();
  auto built = build_prompt(base, {}, 5);
  CHECK(built.instructions == base.instructions);
  CHECK(built.guidelines == base.guidelines);
  CHECK(built.examples.empty());
  CHECK(built.revision == 0);
}

TEST_CASE("build_prompt keeps retrieval rank order and truncates") {
  std::vector<Trajectory> retrieved;
  for (int i = 0; i < 7; ++i) {
    retrieved.push_back(traj("p" + std::to_string(i), "statement " + std::to_string(i),
                             "trace " + std::to_string(i)));
  }

  auto full = build_prompt(base_prompt(), retrieved, 5);
  REQUIRE(full.examples.size() == 5);
  for (int i = 0; i < 5; ++i) {
    CHECK(full.examples[i].problem == "statement " + std::to_string(i));
    CHECK(full.examples[i].solution == "trace " + std::to_string(i));
  }

  auto truncated = build_prompt(base_prompt(), retrieved, 3);
  REQUIRE(truncated.examples.size() == 3);
  CHECK(truncated.examples[2].problem == "statement 2");
}

TEST_CASE("distill_guidelines finds steps shared across traces") {
  std::vector<Trajectory> retrieved = {
      traj("a", "s", "First convert units before adding. Check the sum."),
      traj("b", "s", "Convert units before adding, always."),
      traj("c", "s", "We convert units before adding totals."),
  };
  auto guidelines = distill_guidelines(retrieved, 2);
  REQUIRE(guidelines.size() == 1);
  CHECK(guidelines[0].find("convert units before adding") != std::string::npos);
  CHECK(guidelines[0].rfind("Common step pattern: ", 0) == 0);
}

TEST_CASE("distill_guidelines edge cases") {
  CHECK(distill_guidelines({}, 2).empty());

  std::vector<Trajectory> retrieved = {traj("a", "s", "Multiply the base rate by hours worked.")};
  CHECK(distill_guidelines(retrieved, 2).empty());  // support unreachable
  CHECK(distill_guidelines(retrieved, 1).size() == 1);
}

TEST_CASE("distill_guidelines orders by support then lexicographically") {
  std::vector<Trajectory> retrieved = {
      traj("a", "s", "compute taxes owed first. zebra pattern here."),
      traj("b", "s", "compute taxes owed first. zebra pattern here."),
      traj("c", "s", "compute taxes owed first."),
  };
  auto guidelines = distill_guidelines(retrieved, 2);
  REQUIRE(guidelines.size() == 2);
  CHECK(guidelines[0].find("compute taxes owed") != std::string::npos);  // support 3 first
  CHECK(guidelines[1].find("zebra pattern") != std::string::npos);       // support 2 second
}

TEST_CASE("apply_edits applies in order and bumps the revision") {
  StructuredPrompt p = base_prompt();
  p.examples = {{"q1", "a1"}, {"q2", "a2"}};

  EditSet edits;
  edits.ops = {AppendGuideline{"verify each arithmetic step"}};
  auto next = apply_edits(p, edits);
  CHECK(next.guidelines.size() == 1);
  CHECK(next.revision == 1);
  CHECK(p.guidelines.empty());  // input untouched

  // Sequential index semantics: the second RemoveExample(0) targets the
  // post-removal list.
  EditSet removals;
  removals.ops = {RemoveExample{0}, RemoveExample{0}};
  auto emptied = apply_edits(p, removals);
  CHECK(emptied.examples.empty());
  CHECK(emptied.revision == 1);
}

TEST_CASE("apply_edits covers every operation kind") {
  StructuredPrompt p = base_prompt();
  p.guidelines = {"g0", "g1"};
  p.examples = {{"q0", "a0"}};

  EditSet edits;
  edits.ops = {
      ReplaceInstructions{"new instructions"},
      RemoveGuideline{0},
      AppendGuideline{"g2"},
      ReplaceExample{0, {"q0'", "a0'"}},
      AppendExample{{"q1", "a1"}},
  };
  auto next = apply_edits(p, edits);
  CHECK(next.instructions == "new instructions");
  CHECK(next.guidelines == std::vector<std::string>{"g1", "g2"});
  REQUIRE(next.examples.size() == 2);
  CHECK(next.examples[0].problem == "q0'");
  CHECK(next.examples[1].solution == "a1");
  CHECK(next.revision == 1);
}

TEST_CASE("apply_edits rejects invalid indices atomically") {
  StructuredPrompt p = base_prompt();
  p.guidelines = {"g0", "g1"};
  const StructuredPrompt before = p;

  EditSet bad;
  bad.ops = {AppendGuideline{"fine"}, RemoveGuideline{5}};
  CHECK_THROWS_AS(apply_edits(p, bad), InvalidEditIndex);
  CHECK(p == before);

  EditSet empty;
  CHECK_THROWS_AS(apply_edits(p, empty), Precondition);
}

TEST_CASE("apply_edits is pure") {
  StructuredPrompt p = base_prompt();
  EditSet edits;
  edits.ops = {AppendGuideline{"x"}, AppendExample{{"q", "a"}}};
  auto a = apply_edits(p, edits);
  auto b = apply_edits(p, edits);
  CHECK(a == b);
}

TEST_CASE("render layout and determinism") {
  Problem x{"p1", "How many apples are left?", std::nullopt};

  StructuredPrompt bare = base_prompt();
  auto r = render(bare, x);
  CHECK(r.examples_dropped == 0);
  CHECK(r.text.find(bare.instructions) == 0);
  CHECK(r.text.find("Guidelines:") == std::string::npos);
  CHECK(r.text.find("How many apples are left?") != std::string::npos);
  CHECK(r.text.find("####") != std::string::npos);
  CHECK(render(bare, x).text == r.text);

  StructuredPrompt p = bare;
  p.guidelines = {"check units"};
  p.examples = {{"ex problem A", "ex solution A"}, {"ex problem B", "ex solution B"}};
  auto full = render(p, x).text;
  const auto pos_a = full.find("ex problem A");
  const auto pos_b = full.find("ex problem B");
  const auto pos_x = full.find("How many apples are left?");
  REQUIRE(pos_a != std::string::npos);
  REQUIRE(pos_b != std::string::npos);
  REQUIRE(pos_x != std::string::npos);
  CHECK(pos_a < pos_b);
  CHECK(pos_b < pos_x);
  CHECK(full.find("1. check units") != std::string::npos);
}

TEST_CASE("render drops whole examples under a token budget") {
  Problem x{"p1", "target problem", std::nullopt};
  StructuredPrompt p = base_prompt();
  for (int i = 0; i < 4; ++i) {
    p.examples.push_back({"example problem " + std::to_string(i),
                          "a fairly long worked solution with many words " + std::to_string(i)});
  }
  const auto unbounded = render(p, x);
  CHECK(unbounded.examples_dropped == 0);

  RenderBudget budget;
  budget.max_tokens = 30;
  const auto bounded = render(p, x, budget);
  CHECK(bounded.examples_dropped > 0);
  CHECK(bounded.text.find("target problem") != std::string::npos);
  // Whole examples are dropped from the tail, never split.
  for (int i = 0; i < 4; ++i) {
    const auto header = "example problem " + std::to_string(i);
    const bool has_problem = bounded.text.find(header) != std::string::npos;
    const auto body = "many words " + std::to_string(i);
    const bool has_solution = bounded.text.find(body) != std::string::npos;
    CHECK(has_problem == has_solution);
    if (i > 0 && has_problem) {
      CHECK(bounded.text.find("example problem " + std::to_string(i - 1)) != std::string::npos);
    }
  }
}

TEST_CASE("the render budget safety factor tightens the effective cap") {
  Problem x{"p1", "target", std::nullopt};
  StructuredPrompt p = base_prompt();
  for (int i = 0; i < 3; ++i) {
    p.examples.push_back({"short q " + std::to_string(i), "short a " + std::to_string(i)});
  }
  RenderBudget loose{200, 1.0};
  RenderBudget tight{200, 10.0};  // estimate x10 must fit under the same cap
  CHECK(render(p, x, loose).examples_dropped == 0);
  CHECK(render(p, x, tight).examples_dropped > 0);
}

TEST_CASE("static baseline equivalence: empty retrieval renders like the base") {
  Problem x{"p1", "What is 2 + 2?", std::nullopt};
  StructuredPrompt base = base_prompt();  // no examples by construction
  auto built = build_prompt(base, {}, 5);
  CHECK(render(built, x).text == render(base, x).text);
}
