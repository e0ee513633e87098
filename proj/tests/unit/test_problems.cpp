#include <doctest.h>

#include "codecot/mock_backend.hpp"
#include "codecot/problems.hpp"

using namespace codecot;

namespace {

std::shared_ptr<MockBackend> fallback_mock(std::vector<std::string> replies) {
  auto m = std::make_shared<MockBackend>("problems-mock");
  m->script_fallback(std::move(replies));
  return m;
}

SeedSnippet seed(const std::string& file, std::vector<std::string> fns, const std::string& code = "def f(): pass") {
  return {file, std::move(fns), code, "repo/x"};
}

CodeProblem problem(const std::string& id, const std::string& statement) {
  CodeProblem p;
  p.id = id;
  p.statement = statement;
  return p;
}

}  // namespace

TEST_SUITE("problems") {

TEST_CASE("ingest reports malformed lines and keeps going") {
  const std::string text =
      R"({"id":"a","statement":"Sum two numbers.","source":"synthesized"})" "\n"
      "{not json\n"
      R"({"id":"b"})" "\n"
      "\n"
      R"({"id":"a","statement":"Duplicate."})" "\n"
      R"({"id":"c","statement":"Reverse a string.","difficulty":"easy"})" "\n";
  auto r = ingest_problems_text(text);
  REQUIRE(r.problems.size() == 2);
  CHECK(r.problems[0].id == "a");
  CHECK(r.problems[0].statement == "Sum two numbers.");
  CHECK(r.problems[0].source == ProblemSource::collected);
  CHECK(r.problems[1].difficulty == Difficulty::easy);
  REQUIRE(r.errors.size() == 2);
  CHECK(r.errors[0].line_number == 2);
  CHECK(r.errors[1].line_number == 3);
  REQUIRE(r.warnings.size() == 1);
  CHECK(r.warnings[0].find("duplicate id 'a'") != std::string::npos);
}

TEST_CASE("snippet dedup by file name or any function name") {
  auto out = dedup_snippets({seed("a.py", {"f", "g"}), seed("a.py", {"h"}), seed("b.py", {"g"}), seed("c.py", {"k"}),
                             seed("d.py", {})});
  REQUIRE(out.size() == 3);
  CHECK(out[0].file_name == "a.py");
  CHECK(out[1].file_name == "c.py");
  CHECK(out[2].file_name == "d.py");
}

TEST_CASE("snippets need code") {
  CHECK_THROWS_AS(Json::parse(R"({"file_name":"x.py","code":""})").get<SeedSnippet>(), ValidationError);
}

TEST_CASE("synthesis keeps provenance and stable ids") {
  auto m = fallback_mock({"  Given a list, return its maximum.  ", "I'm sorry, I can't help with that.", ""});
  const auto s = seed("lib/max.py", {"maximum"});
  auto out = synthesize_problem(s, *m, PromptSet::builtin());
  auto* p = std::get_if<CodeProblem>(&out);
  REQUIRE(p);
  CHECK(p->statement == "Given a list, return its maximum.");
  CHECK(p->source == ProblemSource::synthesized);
  CHECK(p->id == synthesized_problem_id(s));
  CHECK(p->id.rfind("syn-", 0) == 0);
  CHECK(p->provenance["seed_file"] == "lib/max.py");
  CHECK(p->provenance["synthesis_backend"] == "problems-mock");
  CHECK(synthesized_problem_id(s) != synthesized_problem_id(seed("lib/max.py", {"maximum"}, "other")));

  auto refused = synthesize_problem(s, *m, PromptSet::builtin());
  REQUIRE(std::holds_alternative<SynthesisFailure>(refused));
  CHECK(std::get<SynthesisFailure>(refused).reason == "refusal");
  auto empty = synthesize_problem(s, *m, PromptSet::builtin());
  CHECK(std::get<SynthesisFailure>(empty).reason == "empty statement");
}

TEST_CASE("synthesis prompt carries the seed") {
  auto m = fallback_mock({"Statement."});
  synthesize_problem(seed("util/strings.py", {"reverse_words"}, "def reverse_words(s): ..."), *m, PromptSet::builtin());
  const auto h = m->history();
  REQUIRE(h.size() == 1);
  std::string all;
  for (const auto& msg : h[0].messages) all += msg.content;
  CHECK(all.find("util/strings.py") != std::string::npos);
  CHECK(all.find("reverse_words") != std::string::npos);
  CHECK(h[0].temperature == doctest::Approx(0.7));
}

TEST_CASE("batch turns backend errors into failure records") {
  auto m = fallback_mock({"One."});
  auto batch = synthesize_batch({seed("a.py", {"f"}), seed("b.py", {"g"})}, *m, PromptSet::builtin());
  CHECK(batch.drafts.size() == 1);
  REQUIRE(batch.failures.size() == 1);
  CHECK(batch.failures[0].seed_file == "b.py");
  CHECK(batch.failures[0].reason.find("backend error") != std::string::npos);
}

TEST_CASE("evolution records the original and degrades gracefully") {
  auto m = fallback_mock({"Harder: also handle negative numbers.", "Same statement.", ""});
  auto r = evolve_instruction(problem("p", "Same statement."), *m, PromptSet::builtin());
  CHECK(r.problem.statement == "Harder: also handle negative numbers.");
  CHECK(r.problem.provenance["pre_evolution_statement"] == "Same statement.");
  CHECK(r.problem.provenance["evolution"] == "evolved");
  CHECK_FALSE(r.no_change);

  r = evolve_instruction(problem("p", "Same statement."), *m, PromptSet::builtin());
  CHECK(r.no_change);
  CHECK(r.problem.provenance["evolution"] == "no_change");

  r = evolve_instruction(problem("p", "Kept."), *m, PromptSet::builtin());
  CHECK(r.degraded);
  CHECK(r.problem.statement == "Kept.");
  CHECK_FALSE(r.warning.empty());

  r = evolve_instruction(problem("p", "Kept."), *m, PromptSet::builtin());  // script exhausted
  CHECK(r.degraded);
  CHECK(r.problem.statement == "Kept.");
}

TEST_CASE("filter judgement parsing") {
  auto d = parse_filter_judgement("clear_intent: yes\nchallenging: YES\nself_contained: no\nrationale: needs a file");
  CHECK(d.clear_intent);
  CHECK(d.challenging);
  CHECK_FALSE(d.self_contained);
  CHECK_FALSE(d.accepted);

  d = parse_filter_judgement("Clear_Intent: true\nchallenging: yes\nself_contained: yes\nclear_intent: no");
  CHECK(d.clear_intent);  // first occurrence wins
  CHECK(d.accepted);

  d = parse_filter_judgement("yes/yes/yes");
  CHECK(d.accepted);

  d = parse_filter_judgement("Looks good to me!");
  CHECK_FALSE(d.accepted);
  CHECK(d.rationale == "unparseable");
}

TEST_CASE("filter asks deterministically") {
  auto m = fallback_mock({"clear_intent: yes\nchallenging: yes\nself_contained: yes"});
  auto d = filter_problem(problem("p", "Count inversions in an array."), *m, PromptSet::builtin());
  CHECK(d.accepted);
  CHECK(m->history().at(0).temperature == doctest::Approx(0.0));
}

}
