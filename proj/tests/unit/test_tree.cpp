#include <doctest.h>

#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "../support/oracles.hpp"
#include "codecot/cot_format.hpp"
#include "codecot/tree.hpp"

using namespace codecot;

namespace {

CodeProblem scripted_problem(int i) {
  CodeProblem p;
  p.id = "tree-" + std::to_string(i);
  p.statement = "Scripted problem " + std::to_string(i) + ": print PASS.";
  p.test_cases = {TestCase::io("", "PASS\n")};
  return p;
}

oracle::Outcome outcome_for(int i) {
  static const oracle::Outcome kCycle[] = {oracle::Outcome::all_pass, oracle::Outcome::all_fail,
                                           oracle::Outcome::mixed};
  return kCycle[i % 3];
}

SearchConfig config_for(int i) {
  SearchConfig c;
  c.max_path_num = 5;
  c.max_depth_num = 2 + static_cast<std::size_t>(i % 7);  // 2..8
  c.seed = 11;
  return c;
}

std::size_t whitespace_tokens(const std::string& s) {
  std::istringstream in(s);
  std::size_t n = 0;
  for (std::string w; in >> w;) ++n;
  return n;
}

void check_invariants(const ReasoningTree& tree, const SearchConfig& cfg) {
  const auto rc = oracle::recount(tree);
  for (const auto& n : tree.nodes()) {
    CAPTURE(n.id);
    CHECK(n.path_count == rc.paths[n.id]);
    CHECK(n.correct_count == rc.correct[n.id]);
    CHECK(n.status == oracle::expected_status(rc.paths[n.id], rc.correct[n.id], cfg.max_path_num));
    CHECK(rc.originated[n.id] <= cfg.max_path_num);
    CHECK(n.depth <= cfg.max_depth_num);
    if (n.parent) CHECK(n.depth == tree.node(*n.parent).depth + 1);
    CHECK(n.children.size() <= n.path_count);
    if (n.is_answer()) CHECK(n.children.empty());
  }
  for (const auto& p : tree.paths()) {
    CHECK(p.node_ids == tree.lineage(p.leaf_id));
    CHECK(p.node_ids.size() - 1 <= cfg.max_depth_num);
    CHECK(std::find(p.node_ids.begin(), p.node_ids.end(), p.origin_id) != p.node_ids.end());
  }
  CHECK(rc.originated[0] == cfg.max_path_num);
}

}  // namespace

TEST_SUITE("tree") {

TEST_CASE("classification") {
  SearchConfig cfg;
  ReasoningNode n;
  CHECK(classify(n, cfg) == NodeStatus::open);
  n.path_count = 4;
  CHECK(classify(n, cfg) == NodeStatus::open);
  n.path_count = 5;
  CHECK(classify(n, cfg) == NodeStatus::rejected);
  n.correct_count = 1;
  CHECK(classify(n, cfg) == NodeStatus::accepted);
  n.path_count = 1;
  CHECK(classify(n, cfg) == NodeStatus::accepted);
}

TEST_CASE("scripted searches keep counts, classes and bounds consistent") {
  for (int i = 0; i < 24; ++i) {
    CAPTURE(i);
    const auto cfg = config_for(i);
    oracle::TreePolicy policy(outcome_for(i), static_cast<std::uint64_t>(i));
    oracle::ScriptedVerifier verifier;
    const auto tree = search(scripted_problem(i), policy, verifier, cfg);
    check_invariants(tree, cfg);
    CHECK_FALSE(select(tree, cfg));

    std::size_t executed = 0;
    for (const auto& p : tree.paths()) {
      if (!p.truncated && !p.malformed && (tree.node(p.leaf_id).is_answer() || p.depth_capped)) ++executed;
    }
    CHECK(verifier.calls() == executed);

    switch (outcome_for(i)) {
      case oracle::Outcome::all_pass:
        CHECK(tree.root().status == NodeStatus::accepted);
        for (const auto& n : tree.nodes()) CHECK(n.status != NodeStatus::rejected);
        break;
      case oracle::Outcome::all_fail:
        CHECK(tree.root().status == NodeStatus::rejected);
        CHECK(tree.paths().size() == cfg.max_path_num);
        for (const auto& n : tree.nodes()) CHECK(n.correct_count == 0);
        break;
      case oracle::Outcome::mixed:
        break;
    }
  }
}

TEST_CASE("mixed searches branch past the root") {
  std::size_t deeper = 0;
  for (int i = 2; i < 24; i += 3) {
    const auto cfg = config_for(i);
    oracle::TreePolicy policy(oracle::Outcome::mixed, static_cast<std::uint64_t>(i));
    oracle::ScriptedVerifier verifier;
    const auto tree = search(scripted_problem(i), policy, verifier, cfg);
    if (tree.paths().size() > cfg.max_path_num) ++deeper;
  }
  CHECK(deeper > 0);
}

TEST_CASE("searches are deterministic to the byte") {
  for (int i = 0; i < 6; ++i) {
    auto run = [&] {
      oracle::TreePolicy policy(outcome_for(i), 99 + static_cast<std::uint64_t>(i));
      oracle::ScriptedVerifier verifier;
      return search(scripted_problem(i), policy, verifier, config_for(i)).to_jsonl();
    };
    CHECK(run() == run());
  }
}

TEST_CASE("jsonl round trip") {
  const auto cfg = config_for(5);
  oracle::TreePolicy policy(oracle::Outcome::mixed, 5);
  oracle::ScriptedVerifier verifier;
  const auto tree = search(scripted_problem(5), policy, verifier, cfg);
  const auto text = tree.to_jsonl(Json{{"note", "x"}});
  const auto back = ReasoningTree::from_jsonl(text);
  CHECK(back.to_jsonl(Json{{"note", "x"}}) == text);
  CHECK(back.manifest["note"] == "x");
  CHECK(back.manifest["format_version"] == kTreeFormatVersion);
  check_invariants(back, cfg);
}

TEST_CASE("over-budget completions are incorrect, unexecuted and counted") {
  SearchConfig cfg;
  cfg.max_depth_num = 8;
  oracle::TreePolicy policy(oracle::Outcome::all_pass, 3, {0});
  oracle::ScriptedVerifier verifier;
  ReasoningTree tree(scripted_problem(0));
  const auto paths = expand(tree, 0, policy, verifier, cfg);
  REQUIRE(paths.size() == cfg.max_path_num);
  CHECK(paths[0].truncated);
  CHECK(paths[0].verdict.status == VerdictStatus::truncated_generation);
  CHECK_FALSE(paths[0].verdict.passed());
  CHECK(verifier.calls() == cfg.max_path_num - 1);
  for (const auto& code : verifier.codes()) CHECK(code.size() < 100);
  CHECK(tree.root().path_count == cfg.max_path_num);
  CHECK(tree.root().correct_count == cfg.max_path_num - 1);
  for (auto id : paths[0].node_ids) CHECK_FALSE(tree.node(id).is_answer());
  check_invariants(tree, cfg);
}

TEST_CASE("the token limit is inclusive") {
  SearchConfig cfg;
  // "<ChainOfThought><thinking>w", N-1 more words, the close tags, the fence,
  // the code line and the closing fence.
  for (std::size_t words : {24996u, 24997u}) {
    CAPTURE(words);
    oracle::TreePolicy policy(oracle::Outcome::all_pass, 1, {0}, words);
    oracle::ScriptedVerifier verifier;
    ReasoningTree tree(scripted_problem(1));
    const auto paths = expand(tree, 0, policy, verifier, cfg);
    std::string w;
    for (std::size_t i = 0; i < words; ++i) w += "w ";
    const auto total = whitespace_tokens("<ChainOfThought><thinking>" + w +
                                         "</thinking></ChainOfThought>\n```python\nprint('PASS')\n```");
    CHECK(paths[0].truncated == (total > 25000));
    CHECK(verifier.calls() == (total > 25000 ? 4u : 5u));
  }
}

TEST_CASE("select expands the root, then the lowest-scored unfinished child") {
  SearchConfig cfg;
  ReasoningTree tree(scripted_problem(0));
  CHECK(select(tree, cfg) == std::optional<std::size_t>(0));

  auto add = [&](std::vector<std::string> steps, bool pass) {
    std::size_t cur = 0;
    for (const auto& s : steps) cur = tree.graft(cur, NodeKind::thinking, s);
    cur = tree.graft(cur, NodeKind::answer, pass ? "print('PASS')" : "print('FAIL')");
    PathRecord p;
    p.node_ids = tree.lineage(cur);
    p.leaf_id = cur;
    p.verdict.status = pass ? VerdictStatus::passed : VerdictStatus::failed;
    tree.backpropagate(p, cfg);
  };
  add({"a"}, true);
  add({"a"}, false);
  add({"b"}, true);
  add({"b"}, true);
  add({"c"}, false);
  const auto c = tree.node(0).children[2];
  CHECK(select(tree, cfg) == std::optional<std::size_t>(c));
}

TEST_CASE("malformed completions fail without execution") {
  struct Rewriter : Backend {
    CompletionResponse complete(const CompletionRequest& req) override {
      CompletionResponse r;
      for (std::size_t i = 0; i < req.n_samples; ++i) {
        r.samples.push_back("ning is done</thinking></ChainOfThought>\n```python\nprint('PASS')\n```");
      }
      return r;
    }
    std::string id() const override { return "rewriter"; }
  } policy;
  oracle::ScriptedVerifier verifier;
  SearchConfig cfg;
  ReasoningTree tree(scripted_problem(0));
  const auto a = tree.graft(0, NodeKind::thinking, "plan");
  const auto paths = expand(tree, a, policy, verifier, cfg);
  for (const auto& p : paths) {
    CHECK(p.malformed);
    CHECK(p.leaf_id == a);
  }
  CHECK(verifier.calls() == 0);
  CHECK(tree.node(a).status == NodeStatus::rejected);
}

TEST_CASE("repeated backend failures abort with the partial tree") {
  struct Broken : Backend {
    CompletionResponse complete(const CompletionRequest&) override { throw BackendError(BackendErrorKind::transport, "down"); }
    std::string id() const override { return "broken"; }
  } policy;
  oracle::ScriptedVerifier verifier;
  SearchConfig cfg;
  try {
    search(scripted_problem(0), policy, verifier, cfg);
    FAIL("expected abort");
  } catch (const TreeSearchAborted& e) {
    CHECK(e.tree().nodes().size() == 1);
  }
}

}

// --- pair mining on hand-built trees ----------------------------------------

namespace {

struct Built {
  ReasoningTree tree;
  std::size_t parent = 0;
  std::map<std::string, std::size_t> child;
};

/// root -> "plan" -> "outline" (the parent under test) -> children. Each entry
/// gives a child's text and its pass/fail outcomes.
Built build(const std::vector<std::pair<std::string, std::vector<bool>>>& children, const SearchConfig& cfg) {
  Built b{ReasoningTree(scripted_problem(7)), 0, {}};
  auto& t = b.tree;
  const auto plan = t.graft(0, NodeKind::thinking, "plan");
  b.parent = t.graft(plan, NodeKind::thinking, "outline");
  for (const auto& [text, outcomes] : children) {
    const auto c = t.graft(b.parent, NodeKind::thinking, text);
    b.child[text] = c;
    for (bool pass : outcomes) {
      const auto leaf = t.graft(c, NodeKind::answer, pass ? "print('PASS')" : "print('FAIL')");
      PathRecord p;
      p.origin_id = b.parent;
      p.node_ids = t.lineage(leaf);
      p.leaf_id = leaf;
      p.verdict.status = pass ? VerdictStatus::passed : VerdictStatus::failed;
      t.backpropagate(p, cfg);
    }
  }
  return b;
}

using Triple = std::tuple<std::size_t, std::size_t, std::size_t>;

std::set<Triple> triples(const std::vector<PreferencePair>& pairs) {
  std::set<Triple> out;
  for (const auto& p : pairs) out.emplace(p.parent_id, p.chosen_id, p.rejected_id);
  return out;
}

void check_prefixes(const Built& b, const std::vector<PreferencePair>& pairs) {
  const auto head = b.tree.problem().statement + "\n\n";
  for (const auto& p : pairs) {
    REQUIRE(p.prefix.rfind(head, 0) == 0);
    const auto scanned = scan_cot(p.prefix.substr(head.size()));
    const auto line = b.tree.lineage(p.parent_id);
    REQUIRE(scanned.steps.size() == line.size() - 1);
    for (std::size_t i = 0; i < scanned.steps.size(); ++i) {
      const auto& n = b.tree.node(line[i + 1]);
      CHECK(scanned.steps[i].text == n.step_text);
      CHECK((scanned.steps[i].kind == SegmentKind::thinking) == (n.kind == NodeKind::thinking));
    }
    const auto with_chosen = scan_cot(p.prefix.substr(head.size()) + p.chosen_step);
    REQUIRE(with_chosen.steps.size() == line.size());
    CHECK(with_chosen.steps.back().text == b.tree.node(p.chosen_id).step_text);
    const auto with_rejected = scan_cot(p.prefix.substr(head.size()) + p.rejected_step);
    REQUIRE(with_rejected.steps.size() == line.size());
    CHECK(with_rejected.steps.back().text == b.tree.node(p.rejected_id).step_text);
  }
}

}  // namespace

TEST_SUITE("tree") {

TEST_CASE("pairs: accepted against rejected") {
  SearchConfig cfg;
  auto b = build({{"good", {true, false}}, {"bad", {false, false, false, false, false}}}, cfg);
  REQUIRE(b.tree.node(b.child["bad"]).status == NodeStatus::rejected);
  const auto pairs = extract_pairs(b.tree, cfg);
  CHECK(triples(pairs) == std::set<Triple>{{b.parent, b.child["good"], b.child["bad"]}});
  check_prefixes(b, pairs);
  CHECK(pairs[0].chosen_score == doctest::Approx(0.5));
  CHECK(pairs[0].rejected_score == 0.0);
}

TEST_CASE("pairs: accepted siblings with a gap of at least 0.4") {
  SearchConfig cfg;
  auto b = build({{"sure", {true, true, true}}, {"shaky", {true, true, true, false, false}}}, cfg);
  const auto pairs = extract_pairs(b.tree, cfg);
  CHECK(triples(pairs) == std::set<Triple>{{b.parent, b.child["sure"], b.child["shaky"]}});
  check_prefixes(b, pairs);
}

TEST_CASE("pairs: accepted siblings closer than 0.4 give nothing") {
  SearchConfig cfg;
  auto b = build({{"sure", {true, true}}, {"close", {true, true, true, true, false}}}, cfg);
  CHECK(extract_pairs(b.tree, cfg).empty());
}

TEST_CASE("pairs: a single classified child gives nothing") {
  SearchConfig cfg;
  auto b = build({{"only", {true, false}}, {"unfinished", {false}}}, cfg);
  REQUIRE(b.tree.node(b.child["unfinished"]).status == NodeStatus::open);
  CHECK(extract_pairs(b.tree, cfg).empty());
}

TEST_CASE("pairs: the gap threshold is configurable") {
  SearchConfig cfg;
  auto b = build({{"sure", {true, true}}, {"close", {true, true, true, true, false}}}, cfg);
  cfg.pair_accuracy_gap = 0.2;
  CHECK(triples(extract_pairs(b.tree, cfg)) == std::set<Triple>{{b.parent, b.child["sure"], b.child["close"]}});
}

TEST_CASE("pairs from searched trees reparse to their node paths") {
  for (int i = 2; i < 24; i += 3) {
    const auto cfg = config_for(i);
    oracle::TreePolicy policy(oracle::Outcome::mixed, static_cast<std::uint64_t>(i));
    oracle::ScriptedVerifier verifier;
    Built b{search(scripted_problem(i), policy, verifier, cfg), 0, {}};
    const auto pairs = extract_pairs(b.tree, cfg);
    for (const auto& p : pairs) {
      const auto& c = b.tree.node(p.chosen_id);
      const auto& r = b.tree.node(p.rejected_id);
      CHECK(c.parent == std::optional<std::size_t>(p.parent_id));
      CHECK(r.parent == std::optional<std::size_t>(p.parent_id));
      CHECK(c.status == NodeStatus::accepted);
      CHECK(r.status != NodeStatus::open);
      CHECK((r.status == NodeStatus::rejected || c.score() - r.score() >= cfg.pair_accuracy_gap - 1e-9));
      const auto head = b.tree.problem().statement + "\n\n";
      REQUIRE(p.prefix.rfind(head, 0) == 0);
      CHECK(p.prefix.substr(head.size()) == b.tree.prefix_text(p.parent_id));
      Json j = p;
      CHECK(j.get<PreferencePair>().prefix == p.prefix);
    }
  }
}

}
