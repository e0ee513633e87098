#include <doctest.h>

#ifdef CODECOT_HAVE_CLI

#include <set>
#include <sstream>

#include "../support/paths.hpp"
#include "../../tools/cli.hpp"
#include "codecot/json_io.hpp"
#include "codecot/tree.hpp"

using namespace codecot;

namespace {

struct Run {
  int rc = 0;
  std::string out;
  std::string err;

  /// The last line of stdout that parses as a JSON object.
  Json summary() const {
    std::istringstream in(out);
    Json last;
    for (std::string line; std::getline(in, line);) {
      auto j = Json::parse(line, nullptr, false);
      if (j.is_object()) last = j;
    }
    return last;
  }
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  Run r;
  r.rc = cli::run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

/// A config whose backends are mocks replaying `replies` from their `*` queue.
std::string write_config(const testpaths::TempDir& tmp, const std::map<std::string, std::vector<std::string>>& replies,
                         Json extra = Json::object()) {
  Json cfg = extra;
  for (const auto& [id, list] : replies) {
    const auto script = tmp / (id + ".script.jsonl");
    write_text_file(script, to_jsonl_line(Json{{"key", "*"}, {"replies", list}}));
    cfg["backends"][id] = {{"type", "mock"}, {"script", script.string()}};
  }
  const auto file = tmp / "pipeline.json";
  write_text_file(file, cfg.dump(2));
  return file.string();
}

CodeProblem plus(int k, const std::string& id) {
  CodeProblem p;
  p.id = id;
  p.statement = "Read an integer n and print n + " + std::to_string(k) + ".";
  p.test_cases = {TestCase::io("1\n", std::to_string(1 + k) + "\n"), TestCase::io("40\n", std::to_string(40 + k) + "\n")};
  return p;
}

std::string code_reply(const std::string& code) { return "Here.\n```python\n" + code + "\n```"; }

std::size_t line_count(const std::filesystem::path& p) {
  return std::filesystem::exists(p) ? read_jsonl(p).size() : 0;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("a bounded run resumes exactly where it stopped") {
  testpaths::TempDir tmp;
  std::vector<CodeProblem> problems;
  std::vector<std::string> verdicts;
  for (int i = 0; i < 10; ++i) {
    problems.push_back(plus(1, "f" + std::to_string(i)));
    verdicts.push_back(i % 3 ? "yes/yes/yes" : "yes/no/yes");
  }
  save_jsonl(tmp / "in.jsonl", problems);
  const auto config = write_config(tmp, {{"policy", verdicts}});
  const auto out = (tmp / "kept.jsonl").string();
  const auto rejected = tmp / "kept.jsonl.rejected.jsonl";

  auto first = run({"--config", config, "--max-items", "6", "problems", "filter", "--in", (tmp / "in.jsonl").string(),
                    "--out", out});
  CHECK(first.rc == 0);
  CHECK(first.summary()["processed"] == 6);
  CHECK(first.summary()["remaining"] == 4);
  CHECK(line_count(out) + line_count(rejected) == 6);

  auto second = run({"--config", config, "--resume", "problems", "filter", "--in", (tmp / "in.jsonl").string(),
                     "--out", out});
  CHECK(second.rc == 0);
  CHECK(second.summary()["processed"] == 4);
  CHECK(second.summary()["skipped"] == 6);
  CHECK(second.summary()["remaining"] == 0);

  std::set<std::string> ids;
  std::size_t lines = 0;
  for (const auto& f : {std::filesystem::path(out), rejected}) {
    for (const auto& p : load_jsonl<CodeProblem>(f)) {
      ids.insert(p.id);
      ++lines;
    }
  }
  CHECK(lines == 10);
  CHECK(ids.size() == 10);
}

TEST_CASE("a checkpoint from different inputs is refused unless forced") {
  testpaths::TempDir tmp;
  std::vector<CodeProblem> problems{plus(1, "a"), plus(2, "b")};
  save_jsonl(tmp / "in.jsonl", problems);
  const auto config = write_config(tmp, {{"policy", {"yes/yes/yes", "yes/yes/yes"}}});
  const std::vector<std::string> base{"problems", "filter", "--in", (tmp / "in.jsonl").string(), "--out",
                                      (tmp / "out.jsonl").string()};
  auto with = [&](std::vector<std::string> flags) {
    flags.insert(flags.begin(), {"--config", config});
    flags.insert(flags.end(), base.begin(), base.end());
    return run(flags);
  };
  CHECK(with({"--max-items", "1"}).rc == 0);

  problems.push_back(plus(3, "c"));
  save_jsonl(tmp / "in.jsonl", problems);
  auto refused = with({"--resume"});
  CHECK(refused.rc == cli::kUsage);
  CHECK(refused.err.find("checkpoint") != std::string::npos);
  CHECK(line_count(tmp / "out.jsonl") == 1);

  write_config(tmp, {{"policy", {"yes/yes/yes", "yes/yes/yes", "yes/yes/yes"}}});
  auto forced = with({"--resume", "--force"});
  CHECK(forced.rc == 0);
  CHECK(forced.summary()["processed"] == 3);
  CHECK(line_count(tmp / "out.jsonl") == 3);
}

TEST_CASE("a stop request ends the stage with the interrupt code") {
  testpaths::TempDir tmp;
  save_jsonl(tmp / "in.jsonl", std::vector<CodeProblem>{plus(1, "a"), plus(2, "b")});
  const auto config = write_config(tmp, {{"policy", {"yes/yes/yes", "yes/yes/yes"}}});
  cli::request_stop();
  auto r = run({"--config", config, "problems", "filter", "--in", (tmp / "in.jsonl").string(), "--out",
                (tmp / "out.jsonl").string()});
  cli::reset_stop();
  CHECK(r.rc == cli::kInterrupted);
  CHECK(r.summary()["interrupted"] == true);
  CHECK(r.summary()["remaining"] == 2);
}

TEST_CASE("usage errors") {
  CHECK(run({}).rc != 0);
  CHECK(run({"problems", "filter", "--in", "/nonexistent", "--out", "x"}).rc != 0);
  testpaths::TempDir tmp;
  save_jsonl(tmp / "in.jsonl", std::vector<CodeProblem>{plus(1, "a")});
  auto r = run({"problems", "filter", "--in", (tmp / "in.jsonl").string(), "--out", (tmp / "o.jsonl").string()});
  CHECK(r.rc == cli::kUsage);
  CHECK(r.err.find("not configured") != std::string::npos);
}

TEST_CASE("verify runs one solution") {
  testpaths::TempDir tmp;
  write_text_file(tmp / "p.json", Json(plus(1, "v")).dump());
  write_text_file(tmp / "good.py", "print(int(input()) + 1)\n");
  write_text_file(tmp / "bad.md", "Try:\n```python\nprint(int(input()))\n```\n");
  auto good = run({"verify", "--problem", (tmp / "p.json").string(), "--code", (tmp / "good.py").string()});
  CHECK(good.rc == cli::kOk);
  CHECK(good.summary()["status"] == "passed");
  auto bad = run({"verify", "--problem", (tmp / "p.json").string(), "--code", (tmp / "bad.md").string()});
  CHECK(bad.rc == cli::kNotPassed);
  CHECK(bad.summary()["status"] == "failed");
}

TEST_CASE("end to end with mock backends") {
  testpaths::TempDir tmp;
  const auto problems_file = (tmp / "problems.jsonl").string();
  save_jsonl(problems_file, std::vector<CodeProblem>{plus(1, "one")});

  std::vector<std::string> policy;
  for (int i = 0; i < 5; ++i) {
    policy.push_back("<thinking>read n<step>add one</thinking></ChainOfThought>\n```python\nprint(int(input()) + 1)\n```");
  }
  const auto config = write_config(
      tmp,
      {{"think", {"Read n.<step>Print n + 1.\n```python\nprint(int(input()) + 1)\n```"}},
       {"reflect", {"DECISION: EMIT"}},
       {"policy", policy}},
      Json{{"cot", {{"thinking_backend", "think"}, {"reflection_backend", "reflect"}}},
           {"problems", {{"synthesis_backend", ""}, {"evolve_backend", ""}, {"filter_backend", ""}}},
           {"eval", {{"backend", ""}}}});

  auto cot = run({"--config", config, "cot", "make", "--problems", problems_file, "--out", (tmp / "traces.jsonl").string()});
  REQUIRE(cot.rc == 0);
  CHECK(line_count(tmp / "traces.jsonl") == 1);

  auto sft = run({"--config", config, "export", "sft", "--traces", (tmp / "traces.jsonl").string(), "--problems",
                  problems_file, "--out", (tmp / "sft.jsonl").string(), "--reverify"});
  CHECK(sft.rc == 0);
  CHECK(line_count(tmp / "sft.jsonl") == 1);
  CHECK(std::filesystem::exists(tmp / "sft.jsonl.manifest.json"));

  auto search = run({"--config", config, "tree", "search", "--problems", problems_file, "--out", (tmp / "trees").string()});
  REQUIRE(search.rc == 0);
  const auto tree = ReasoningTree::from_jsonl(read_text_file(tmp / "trees" / "one.tree.jsonl"));
  CHECK(tree.paths().size() == 5);
  CHECK(tree.root().correct_count == 5);

  auto pairs = run({"--config", config, "tree", "pairs", "--trees", (tmp / "trees").string(), "--out",
                    (tmp / "pairs.jsonl").string()});
  CHECK(pairs.rc == 0);
  CHECK(line_count(tmp / "pairs.jsonl") == 0);
  auto dpo = run({"--config", config, "export", "dpo", "--pairs", (tmp / "pairs.jsonl").string(), "--out",
                  (tmp / "dpo.jsonl").string()});
  CHECK(dpo.rc == 0);
  const auto manifest = Json::parse(read_text_file(tmp / "dpo.jsonl.manifest.json"));
  CHECK(manifest["training"]["step_dpo"]["beta"] == 0.1);
}

TEST_CASE("eval run writes the samples, report and table") {
  testpaths::TempDir tmp;
  const auto problems_file = (tmp / "problems.jsonl").string();
  auto a = plus(1, "a");
  a.difficulty = Difficulty::easy;
  auto b = plus(2, "b");
  b.difficulty = Difficulty::hard;
  save_jsonl(problems_file, std::vector<CodeProblem>{a, b});
  std::vector<std::string> replies;
  for (int i = 0; i < 10; ++i) replies.push_back(code_reply(i < 7 ? "print(int(input()) + 1)" : "print(0)"));
  for (int i = 0; i < 10; ++i) replies.push_back(code_reply("print(int(input()) + 2)"));
  const auto config = write_config(tmp, {{"policy", replies}});

  const auto report_file = tmp / "report.json";
  auto r = run({"--config", config, "eval", "run", "--problems", problems_file, "--out", report_file.string()});
  REQUIRE(r.rc == 0);
  CHECK(line_count(tmp / "report.json.samples.jsonl") == 20);
  const auto report = Json::parse(read_text_file(report_file));
  CHECK(report["header"]["n_samples"] == 10);
  CHECK(report["header"]["temperature"] == 0.2);
  const auto table = read_text_file(tmp / "report.json.txt");
  CHECK(table.find("n_samples=10 temperature=0.2") != std::string::npos);
  CHECK(table.find("85.00") != std::string::npos);
  CHECK(r.out.find("85.00") != std::string::npos);
}

}

#endif
