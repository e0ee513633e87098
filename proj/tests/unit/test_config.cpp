#include <doctest.h>

#include <cstdlib>

#include "../support/paths.hpp"
#include "codecot/config.hpp"
#include "codecot/json_io.hpp"

using namespace codecot;

namespace {

Json minimal() {
  return Json::parse(R"({
    "backends": {"policy": {"type": "mock"}},
    "cot": {"thinking_backend": "policy", "reflection_backend": "policy"}
  })");
}

std::vector<std::string> errors_of(const Json& j) {
  try {
    PipelineConfig::from_json(j);
  } catch (const ConfigError& e) {
    return e.problems();
  }
  return {};
}

bool mentions(const std::vector<std::string>& errors, const std::string& needle) {
  for (const auto& e : errors) {
    if (e.find(needle) != std::string::npos) return true;
  }
  return false;
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("a minimal config loads with the reference defaults") {
  const auto cfg = PipelineConfig::from_json(minimal());
  CHECK(cfg.search.search.max_path_num == 5);
  CHECK(cfg.search.search.max_depth_num == 64);
  CHECK(cfg.search.search.token_budget.limit == 25000);
  CHECK(cfg.search.search.pair_accuracy_gap == doctest::Approx(0.4));
  CHECK(cfg.eval.eval.n_samples == 10);
  CHECK(cfg.eval.eval.temperature == doctest::Approx(0.2));
  CHECK(cfg.problems.ngram == 10);
  CHECK(cfg.cot.workflow.max_feedback_attempts == 3);
  auto reg = cfg.make_backends();
  CHECK(reg.get("policy")->id() == "policy");
}

TEST_CASE("every violation is reported at once") {
  auto j = minimal();
  j["bogus"] = 1;
  j["backends"]["weird"] = {{"type", "carrier-pigeon"}};
  j["search"] = {{"policy_backend", "missing"}, {"max_path_num", 0}};
  j["problems"] = {{"ngram", 0}};
  const auto errors = errors_of(j);
  CHECK(errors.size() >= 4);
  CHECK(mentions(errors, "unknown top-level section 'bogus'"));
  CHECK(mentions(errors, "carrier-pigeon"));
  CHECK(mentions(errors, "ngram"));
  CHECK(mentions(errors, "search"));
}

TEST_CASE("unknown backend references are errors") {
  auto j = minimal();
  j["eval"] = {{"backend", "ghost"}};
  CHECK(mentions(errors_of(j), "eval.backend: unknown backend id 'ghost'"));
}

TEST_CASE("environment interpolation") {
  ::setenv("CODECOT_TEST_URL", "http://127.0.0.1:9", 1);
  ::unsetenv("CODECOT_TEST_UNSET");
  std::vector<std::string> missing;
  CHECK(interpolate_env("a ${CODECOT_TEST_URL} b", missing) == "a http://127.0.0.1:9 b");
  CHECK(missing.empty());
  CHECK(interpolate_env("${CODECOT_TEST_UNSET}/x", missing) == "/x");
  CHECK(missing == std::vector<std::string>{"CODECOT_TEST_UNSET"});

  auto j = minimal();
  j["backends"]["remote"] = {{"type", "openai"}, {"base_url", "${CODECOT_TEST_URL}"}, {"model", "m"}};
  const auto cfg = PipelineConfig::from_json(j);
  CHECK(cfg.backends.at("remote").base_url == "http://127.0.0.1:9");
  CHECK(cfg.raw["backends"]["remote"]["base_url"] == "http://127.0.0.1:9");

  j["backends"]["remote"]["base_url"] = "${CODECOT_TEST_UNSET}";
  CHECK(mentions(errors_of(j), "CODECOT_TEST_UNSET"));
}

TEST_CASE("relative paths resolve against the config file") {
  testpaths::TempDir tmp;
  std::filesystem::create_directories(tmp / "scripts");
  write_text_file(tmp / "scripts" / "policy.jsonl", R"({"key": "*", "replies": ["hi"]})" "\n");
  auto j = minimal();
  j["backends"]["policy"]["script"] = "scripts/policy.jsonl";
  j["paths"] = {{"data_dir", "out"}};
  write_text_file(tmp / "pipeline.json", j.dump());
  const auto cfg = PipelineConfig::load(tmp / "pipeline.json");
  CHECK(cfg.data_dir == std::filesystem::absolute(tmp / "out"));
  CHECK(cfg.backends.at("policy").script == std::filesystem::absolute(tmp / "scripts" / "policy.jsonl"));

  j["backends"]["policy"]["script"] = "scripts/absent.jsonl";
  write_text_file(tmp / "pipeline.json", j.dump());
  CHECK_THROWS_AS(PipelineConfig::load(tmp / "pipeline.json"), ConfigError);

  write_text_file(tmp / "broken.json", "{not json");
  CHECK_THROWS_AS(PipelineConfig::load(tmp / "broken.json"), ConfigError);
}

TEST_CASE("checkpoints save atomically and load back") {
  testpaths::TempDir tmp;
  CHECK_FALSE(RunCheckpoint::load(tmp / "none.json"));
  RunCheckpoint c{"run-1", "cot", stage_config_hash("cot", Json{{"a", 1}}), {"p1", "p2"}};
  c.save(tmp / "ck.json");
  const auto back = RunCheckpoint::load(tmp / "ck.json");
  REQUIRE(back);
  CHECK(back->to_json() == c.to_json());
  CHECK(back->contains("p2"));
  CHECK_FALSE(back->contains("p3"));
  for (const auto& e : std::filesystem::directory_iterator(tmp.path)) {
    CHECK(e.path().extension() != ".tmp");
  }
}

TEST_CASE("stage hashes depend on stage and inputs only") {
  const Json inputs{{"file", "abc"}, {"n", 3}};
  CHECK(stage_config_hash("cot", inputs) == stage_config_hash("cot", inputs));
  CHECK(stage_config_hash("cot", inputs) != stage_config_hash("search", inputs));
  CHECK(stage_config_hash("cot", inputs) != stage_config_hash("cot", Json{{"file", "abd"}, {"n", 3}}));
}

}
