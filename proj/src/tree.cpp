#include "codecot/tree.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <sstream>

#include "codecot/cot_format.hpp"
#include "codecot/json_io.hpp"
#include "codecot/sandbox.hpp"

namespace codecot {

namespace {

constexpr double kScoreEpsilon = 1e-12;

NodeKind kind_of(SegmentKind k) { return k == SegmentKind::thinking ? NodeKind::thinking : NodeKind::reflection; }

bool expandable(const ReasoningNode& n, const SearchConfig& config) {
  return !n.is_answer() && n.depth < config.max_depth_num;
}

Verdict failed_without_execution(std::string detail) {
  Verdict v;
  v.status = VerdictStatus::failed;
  v.detail = std::move(detail);
  return v;
}

}  // namespace

void SearchConfig::validate() const {
  if (max_path_num < 2) throw ValidationError("max_path_num", "must be >= 2");
  if (max_depth_num < 1) throw ValidationError("max_depth_num", "must be >= 1");
  if (pair_accuracy_gap < 0.0 || pair_accuracy_gap > 1.0) {
    throw ValidationError("pair_accuracy_gap", "must lie in [0, 1]");
  }
  if (temperature < 0.0) throw ValidationError("temperature", "must be >= 0");
  if (max_tokens == 0) throw ValidationError("max_tokens", "must be > 0");
  token_budget.validate();
}

void to_json(Json& j, const SearchConfig& c) {
  j = Json{{"max_path_num", c.max_path_num},
           {"max_depth_num", c.max_depth_num},
           {"token_limit", c.token_budget.limit},
           {"token_rule", to_string(c.token_budget.counter)},
           {"pair_accuracy_gap", c.pair_accuracy_gap},
           {"temperature", c.temperature},
           {"max_tokens", c.max_tokens},
           {"seed", c.seed ? Json(*c.seed) : Json(nullptr)},
           {"infra_retry_limit", c.infra_retry_limit}};
}

void from_json(const Json& j, SearchConfig& c) {
  c = SearchConfig{};
  c.max_path_num = j.value("max_path_num", c.max_path_num);
  c.max_depth_num = j.value("max_depth_num", c.max_depth_num);
  c.token_budget.limit = j.value("token_limit", c.token_budget.limit);
  c.token_budget.counter = token_rule_from(j.value("token_rule", to_string(c.token_budget.counter)));
  c.pair_accuracy_gap = j.value("pair_accuracy_gap", c.pair_accuracy_gap);
  c.temperature = j.value("temperature", c.temperature);
  c.max_tokens = j.value("max_tokens", c.max_tokens);
  if (auto it = j.find("seed"); it != j.end() && !it->is_null()) c.seed = it->get<std::int64_t>();
  c.infra_retry_limit = j.value("infra_retry_limit", c.infra_retry_limit);
  c.validate();
}

std::string to_string(NodeKind k) {
  switch (k) {
    case NodeKind::root: return "root";
    case NodeKind::thinking: return "thinking";
    case NodeKind::reflection: return "reflection";
    case NodeKind::answer: return "answer";
  }
  return "?";
}

std::string to_string(NodeStatus s) {
  switch (s) {
    case NodeStatus::open: return "open";
    case NodeStatus::accepted: return "accepted";
    case NodeStatus::rejected: return "rejected";
  }
  return "?";
}

NodeKind node_kind_from(const std::string& s) {
  for (auto k : {NodeKind::root, NodeKind::thinking, NodeKind::reflection, NodeKind::answer}) {
    if (to_string(k) == s) return k;
  }
  throw ValidationError("unknown_node_kind", "'" + s + "'");
}

NodeStatus node_status_from(const std::string& s) {
  for (auto k : {NodeStatus::open, NodeStatus::accepted, NodeStatus::rejected}) {
    if (to_string(k) == s) return k;
  }
  throw ValidationError("unknown_node_status", "'" + s + "'");
}

NodeStatus classify(const ReasoningNode& node, const SearchConfig& config) {
  if (node.correct_count >= 1) return NodeStatus::accepted;
  if (node.path_count >= config.max_path_num) return NodeStatus::rejected;
  return NodeStatus::open;
}

ReasoningTree::ReasoningTree(CodeProblem problem) : problem_(std::move(problem)) {
  ReasoningNode root;
  root.step_text = problem_.statement;
  nodes_.push_back(std::move(root));
}

std::vector<std::size_t> ReasoningTree::lineage(std::size_t id) const {
  std::vector<std::size_t> out;
  for (std::optional<std::size_t> cur = id; cur; cur = nodes_.at(*cur).parent) out.push_back(*cur);
  std::reverse(out.begin(), out.end());
  return out;
}

std::string ReasoningTree::continuation(std::size_t id) const {
  const auto& n = nodes_.at(id);
  if (!n.parent) return "";
  const bool after_thinking = nodes_.at(*n.parent).kind == NodeKind::thinking;
  const std::string close = after_thinking ? std::string(tags::kThinkingClose) : "";
  switch (n.kind) {
    case NodeKind::thinking:
      return std::string(after_thinking ? tags::kStep : tags::kThinkingOpen) + n.step_text;
    case NodeKind::reflection:
      return close + std::string(tags::kReflectionOpen) + n.step_text + std::string(tags::kReflectionClose);
    case NodeKind::answer:
      return close + std::string(tags::kCotClose) + "\n```" + std::string(kDefaultFenceLanguage) + "\n" + n.step_text +
             "\n```";
    case NodeKind::root:
      break;
  }
  return "";
}

std::string ReasoningTree::prefix_text(std::size_t id) const {
  std::string out(tags::kCotOpen);
  for (auto n : lineage(id)) out += continuation(n);
  return out;
}

std::size_t ReasoningTree::graft(std::size_t parent, NodeKind kind, const std::string& text) {
  for (auto c : nodes_.at(parent).children) {
    if (nodes_[c].kind == kind && nodes_[c].step_text == text) return c;
  }
  if (nodes_.at(parent).is_answer()) throw std::logic_error("answer nodes are leaves");
  ReasoningNode n;
  n.id = nodes_.size();
  n.parent = parent;
  n.kind = kind;
  n.step_text = text;
  n.depth = nodes_[parent].depth + 1;
  nodes_.push_back(std::move(n));
  nodes_[parent].children.push_back(nodes_.back().id);
  return nodes_.back().id;
}

void ReasoningTree::backpropagate(PathRecord path, const SearchConfig& config) {
  const bool passed = path.verdict.passed();
  for (auto id : path.node_ids) {
    auto& n = nodes_.at(id);
    ++n.path_count;
    if (passed) ++n.correct_count;
    n.status = classify(n, config);
  }
  paths_.push_back(std::move(path));
}

std::string ReasoningTree::to_jsonl(const Json& manifest_extra) const {
  Json head = manifest_extra;
  head["type"] = "manifest";
  head["format_version"] = kTreeFormatVersion;
  head["problem"] = problem_;
  std::string out = to_jsonl_line(head);
  for (const auto& n : nodes_) {
    out += to_jsonl_line(Json{{"type", "node"},
                              {"id", n.id},
                              {"parent", n.parent ? Json(*n.parent) : Json(nullptr)},
                              {"kind", to_string(n.kind)},
                              {"step_text", n.step_text},
                              {"depth", n.depth},
                              {"path_count", n.path_count},
                              {"correct_count", n.correct_count},
                              {"status", to_string(n.status)}});
  }
  for (const auto& p : paths_) {
    out += to_jsonl_line(Json{{"type", "path"},
                              {"origin_id", p.origin_id},
                              {"node_ids", p.node_ids},
                              {"leaf_id", p.leaf_id},
                              {"verdict", verdict_to_stable_json(p.verdict)},
                              {"truncated", p.truncated},
                              {"depth_capped", p.depth_capped},
                              {"malformed", p.malformed}});
  }
  return out;
}

ReasoningTree ReasoningTree::from_jsonl(const std::string& text) {
  ReasoningTree tree;
  bool have_manifest = false;
  for (const auto& line : read_jsonl_text(text)) {
    if (!line.value) throw IoError("tree line " + std::to_string(line.line_number) + ": " + line.error);
    const Json& j = *line.value;
    const auto type = j.value("type", std::string());
    if (type == "manifest") {
      if (j.value("format_version", 0) != kTreeFormatVersion) {
        throw IoError("unsupported tree format_version " + j.value("format_version", Json()).dump());
      }
      tree.problem_ = j.at("problem").get<CodeProblem>();
      tree.manifest = j;
      have_manifest = true;
    } else if (type == "node") {
      ReasoningNode n;
      n.id = j.at("id").get<std::size_t>();
      if (n.id != tree.nodes_.size()) throw IoError("tree nodes must be listed in id order");
      if (!j.at("parent").is_null()) {
        n.parent = j.at("parent").get<std::size_t>();
        if (*n.parent >= n.id) throw IoError("node " + std::to_string(n.id) + " listed before its parent");
        tree.nodes_[*n.parent].children.push_back(n.id);
      }
      n.kind = node_kind_from(j.at("kind").get<std::string>());
      n.step_text = j.at("step_text").get<std::string>();
      n.depth = j.at("depth").get<std::size_t>();
      n.path_count = j.at("path_count").get<std::size_t>();
      n.correct_count = j.at("correct_count").get<std::size_t>();
      n.status = node_status_from(j.at("status").get<std::string>());
      tree.nodes_.push_back(std::move(n));
    } else if (type == "path") {
      PathRecord p;
      p.origin_id = j.at("origin_id").get<std::size_t>();
      p.node_ids = j.at("node_ids").get<std::vector<std::size_t>>();
      p.leaf_id = j.at("leaf_id").get<std::size_t>();
      p.verdict = j.at("verdict").get<Verdict>();
      p.truncated = j.value("truncated", false);
      p.depth_capped = j.value("depth_capped", false);
      p.malformed = j.value("malformed", false);
      tree.paths_.push_back(std::move(p));
    } else {
      throw IoError("tree line " + std::to_string(line.line_number) + ": unknown record type '" + type + "'");
    }
  }
  if (!have_manifest || tree.nodes_.empty()) throw IoError("tree file lacks a manifest or root node");
  return tree;
}

std::optional<std::size_t> select(const ReasoningTree& tree, const SearchConfig& config) {
  auto by_score = [&](std::size_t a, std::size_t b) {
    const auto& na = tree.node(a);
    const auto& nb = tree.node(b);
    if (na.score() != nb.score()) return na.score() < nb.score();
    return a < b;
  };

  std::vector<std::size_t> level{tree.root().id};
  while (!level.empty()) {
    std::sort(level.begin(), level.end(), by_score);
    for (auto id : level) {
      const auto& n = tree.node(id);
      if (expandable(n, config) && n.path_count < config.max_path_num) return id;
    }
    // Level fully explored: descend through accepted nodes whose paths are not all correct.
    std::vector<std::size_t> next;
    for (auto id : level) {
      const auto& n = tree.node(id);
      if (!expandable(n, config) || n.status != NodeStatus::accepted || n.correct_count >= n.path_count) continue;
      for (auto c : n.children) {
        if (!tree.node(c).is_answer()) next.push_back(c);
      }
    }
    level = std::move(next);
  }
  return std::nullopt;
}

CompletionRequest expansion_request(const ReasoningTree& tree, std::size_t node_id, std::size_t n_samples,
                                    const SearchConfig& config, const PromptSet& prompts) {
  CompletionRequest req;
  req.messages = {{Role::system, prompts.render("tree_policy")},
                  {Role::user, tree.problem().statement},
                  {Role::assistant, tree.prefix_text(node_id)}};
  req.temperature = config.temperature;
  req.max_tokens = config.max_tokens;
  req.n_samples = n_samples;
  if (config.seed) req.seed = *config.seed + static_cast<std::int64_t>(node_id);
  return req;
}

namespace {

PathRecord build_path(ReasoningTree& tree, std::size_t origin, const std::string& completion, bool backend_truncated,
                      Verifier& verifier, const SearchConfig& config) {
  PathRecord path;
  path.origin_id = origin;

  const std::string full = tree.prefix_text(origin) + completion;
  path.truncated = backend_truncated || check_budget(full, config.token_budget).truncated;
  const std::string text = path.truncated ? full.substr(0, budget_prefix_length(full, config.token_budget)) : full;
  const ScannedCot scanned = scan_cot(text);

  const auto line = tree.lineage(origin);
  const std::size_t known = line.size() - 1;  // steps already on the origin's path
  auto steps = scanned.steps;
  // A cut-off completion may end mid-step; keep only steps known to be whole.
  if (path.truncated && steps.size() > known) steps.pop_back();

  bool matches = steps.size() >= known;
  for (std::size_t i = 0; matches && i < known; ++i) {
    const auto& n = tree.node(line[i + 1]);
    matches = n.kind == kind_of(steps[i].kind) && n.step_text == steps[i].text;
  }

  std::size_t cur = origin;
  if (!matches) {
    path.malformed = true;
  } else {
    for (std::size_t i = known; i < steps.size(); ++i) {
      if (tree.node(cur).depth + 1 > config.max_depth_num) {
        path.depth_capped = true;
        break;
      }
      cur = tree.graft(cur, kind_of(steps[i].kind), steps[i].text);
    }
  }

  const bool has_code = scanned.final_code && !scanned.final_code->code.empty();
  if (!path.truncated && !path.malformed && has_code) {
    if (!path.depth_capped && tree.node(cur).depth + 1 <= config.max_depth_num) {
      cur = tree.graft(cur, NodeKind::answer, scanned.final_code->code);
    } else {
      path.depth_capped = true;
    }
  }
  path.node_ids = tree.lineage(cur);
  path.leaf_id = cur;

  if (path.truncated) {
    path.verdict = Verdict::truncated();
  } else if (path.malformed) {
    path.verdict = failed_without_execution("completion does not extend the expanded node");
  } else if (!has_code) {
    path.verdict = failed_without_execution("no final code");
  } else {
    path.verdict = verifier.verify(tree.problem(), scanned.final_code->code);
  }
  return path;
}

}  // namespace

std::vector<PathRecord> expand(ReasoningTree& tree, std::size_t node_id, Backend& policy, Verifier& verifier,
                               const SearchConfig& config, const PromptSet& prompts) {
  config.validate();
  const auto& origin = tree.node(node_id);
  if (!expandable(origin, config)) throw std::logic_error("node " + std::to_string(node_id) + " is not expandable");

  std::vector<PathRecord> produced;
  std::size_t failures = 0;
  auto infra_failure = [&](const std::string& what) {
    spdlog::warn("tree {}: infrastructure failure while expanding node {}: {}", tree.problem().id, node_id, what);
    if (++failures > config.infra_retry_limit) {
      throw TreeSearchAborted("expansion of node " + std::to_string(node_id) + " failed " + std::to_string(failures) +
                                  " times: " + what,
                              tree);
    }
  };

  while (tree.node(node_id).path_count < config.max_path_num) {
    const std::size_t needed = config.max_path_num - tree.node(node_id).path_count;
    CompletionResponse resp;
    try {
      resp = policy.complete(expansion_request(tree, node_id, needed, config, prompts));
    } catch (const BackendError& e) {
      infra_failure(e.what());
      continue;
    }
    for (std::size_t i = 0; i < resp.samples.size() && i < needed; ++i) {
      const bool flagged = i < resp.truncated_flags.size() && resp.truncated_flags[i];
      try {
        auto path = build_path(tree, node_id, resp.samples[i], flagged, verifier, config);
        produced.push_back(path);
        tree.backpropagate(std::move(path), config);
      } catch (const SandboxUnavailable& e) {
        infra_failure(e.what());
      } catch (const BackendError& e) {
        infra_failure(e.what());
      }
    }
  }
  return produced;
}

ReasoningTree search(const CodeProblem& problem, Backend& policy, Verifier& verifier, const SearchConfig& config,
                     const PromptSet& prompts) {
  config.validate();
  ReasoningTree tree(problem);
  while (auto id = select(tree, config)) expand(tree, *id, policy, verifier, config, prompts);
  return tree;
}

void to_json(Json& j, const PreferencePair& p) {
  j = Json{{"problem_id", p.problem_id},       {"parent_id", p.parent_id},
           {"chosen_id", p.chosen_id},         {"rejected_id", p.rejected_id},
           {"prefix", p.prefix},               {"chosen_step", p.chosen_step},
           {"rejected_step", p.rejected_step}, {"chosen_score", p.chosen_score},
           {"rejected_score", p.rejected_score}};
}

void from_json(const Json& j, PreferencePair& p) {
  p.problem_id = j.at("problem_id").get<std::string>();
  p.parent_id = j.value("parent_id", std::size_t{0});
  p.chosen_id = j.value("chosen_id", std::size_t{0});
  p.rejected_id = j.value("rejected_id", std::size_t{0});
  p.prefix = j.at("prefix").get<std::string>();
  p.chosen_step = j.at("chosen_step").get<std::string>();
  p.rejected_step = j.at("rejected_step").get<std::string>();
  p.chosen_score = j.at("chosen_score").get<double>();
  p.rejected_score = j.at("rejected_score").get<double>();
}

std::string pair_prefix(const std::string& statement, const std::string& partial_cot) {
  return statement + "\n\n" + partial_cot;
}

std::vector<PreferencePair> extract_pairs(const ReasoningTree& tree, const SearchConfig& config) {
  std::vector<PreferencePair> pairs;
  for (const auto& parent : tree.nodes()) {
    if (parent.status != NodeStatus::accepted) continue;
    std::vector<std::size_t> classified;
    for (auto c : parent.children) {
      if (tree.node(c).status != NodeStatus::open) classified.push_back(c);
    }
    if (classified.size() < 2) continue;

    std::size_t chosen = classified.front();
    std::size_t rejected = classified.front();
    for (auto c : classified) {
      const auto& n = tree.node(c);
      if (n.score() > tree.node(chosen).score()) chosen = c;
      const auto& r = tree.node(rejected);
      if (n.score() < r.score() ||
          (n.score() == r.score() && n.status == NodeStatus::rejected && r.status != NodeStatus::rejected)) {
        rejected = c;
      }
    }
    const auto& cn = tree.node(chosen);
    const auto& rn = tree.node(rejected);
    if (chosen == rejected || cn.status != NodeStatus::accepted || !(cn.score() > rn.score())) continue;
    const bool contrast =
        rn.status == NodeStatus::rejected || cn.score() - rn.score() + kScoreEpsilon >= config.pair_accuracy_gap;
    if (!contrast) continue;

    PreferencePair p;
    p.problem_id = tree.problem().id;
    p.parent_id = parent.id;
    p.chosen_id = chosen;
    p.rejected_id = rejected;
    p.prefix = pair_prefix(tree.problem().statement, tree.prefix_text(parent.id));
    p.chosen_step = tree.continuation(chosen);
    p.rejected_step = tree.continuation(rejected);
    p.chosen_score = cn.score();
    p.rejected_score = rn.score();
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace codecot
