#pragma once

// Reasoning-tree search over step-delimited CoT completions and step-level
// preference pair mining.
//
// Each node is one step (thinking step, reflection, or final answer code).
// A path is one sampled completion grafted from the root; counts are
// backpropagated along it. Selection walks the tree level by level.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "codecot/backend.hpp"
#include "codecot/execution_agent.hpp"
#include "codecot/prompts.hpp"
#include "codecot/tokens.hpp"
#include "codecot/types.hpp"

namespace codecot {

inline constexpr int kTreeFormatVersion = 1;

struct SearchConfig {
  std::size_t max_path_num = 5;
  std::size_t max_depth_num = 64;
  TokenBudget token_budget;
  double pair_accuracy_gap = 0.4;
  double temperature = 0.7;
  std::size_t max_tokens = 25000;
  std::optional<std::int64_t> seed;
  std::size_t infra_retry_limit = 3;  // consecutive failed sampling calls before aborting

  void validate() const;
};

void to_json(Json& j, const SearchConfig& c);
void from_json(const Json& j, SearchConfig& c);

enum class NodeKind { root, thinking, reflection, answer };
enum class NodeStatus { open, accepted, rejected };
std::string to_string(NodeKind);
std::string to_string(NodeStatus);
NodeKind node_kind_from(const std::string&);
NodeStatus node_status_from(const std::string&);

struct ReasoningNode {
  std::size_t id = 0;
  std::optional<std::size_t> parent;
  NodeKind kind = NodeKind::root;
  std::string step_text;
  std::size_t depth = 0;
  std::size_t path_count = 0;
  std::size_t correct_count = 0;
  NodeStatus status = NodeStatus::open;
  std::vector<std::size_t> children;

  bool is_answer() const noexcept { return kind == NodeKind::answer; }
  /// correct_count / path_count, 0 for unvisited nodes.
  double score() const noexcept {
    return path_count ? static_cast<double>(correct_count) / static_cast<double>(path_count) : 0.0;
  }
};

struct PathRecord {
  std::size_t origin_id = 0;
  std::vector<std::size_t> node_ids;  // root first
  std::size_t leaf_id = 0;
  Verdict verdict;
  bool truncated = false;
  bool depth_capped = false;  // steps beyond max_depth_num were not grafted
  bool malformed = false;     // completion did not extend the origin's steps
};

NodeStatus classify(const ReasoningNode& node, const SearchConfig& config);

class ReasoningTree {
 public:
  ReasoningTree() = default;
  explicit ReasoningTree(CodeProblem problem);

  const CodeProblem& problem() const noexcept { return problem_; }
  const ReasoningNode& root() const { return nodes_.front(); }
  const ReasoningNode& node(std::size_t id) const { return nodes_.at(id); }
  const std::vector<ReasoningNode>& nodes() const noexcept { return nodes_; }
  const std::vector<PathRecord>& paths() const noexcept { return paths_; }

  /// Node ids from the root to `id`, inclusive.
  std::vector<std::size_t> lineage(std::size_t id) const;

  /// Text that `id` adds to the CoT after its parent's prefix.
  std::string continuation(std::size_t id) const;

  /// "<ChainOfThought>" followed by the continuations of every node on the
  /// path to `id`. For an answer node this is the full serialized CoT.
  std::string prefix_text(std::size_t id) const;

  /// Child of `parent` with identical kind and text, creating it if needed.
  std::size_t graft(std::size_t parent, NodeKind kind, const std::string& text);

  /// Records the path and updates counts and statuses of its nodes.
  void backpropagate(PathRecord path, const SearchConfig& config);

  /// JSONL: a manifest line, one line per node, one line per path.
  std::string to_jsonl(const Json& manifest_extra = Json::object()) const;
  static ReasoningTree from_jsonl(const std::string& text);

  Json manifest;  // as read back by from_jsonl

 private:
  CodeProblem problem_;
  std::vector<ReasoningNode> nodes_;
  std::vector<PathRecord> paths_;
};

/// Next node to expand, or none once the search is exhausted.
std::optional<std::size_t> select(const ReasoningTree& tree, const SearchConfig& config);

/// Thrown after repeated infrastructure failures; carries the partial tree.
class TreeSearchAborted : public std::runtime_error {
 public:
  TreeSearchAborted(const std::string& what, ReasoningTree tree)
      : std::runtime_error(what), tree_(std::move(tree)) {}
  const ReasoningTree& tree() const noexcept { return tree_; }

 private:
  ReasoningTree tree_;
};

/// The chat request used to sample completions from `node_id`.
CompletionRequest expansion_request(const ReasoningTree& tree, std::size_t node_id, std::size_t n_samples,
                                    const SearchConfig& config, const PromptSet& prompts);

/// Samples max_path_num - path_count completions from the node, grafts,
/// verifies and backpropagates them. Returns the recorded paths.
std::vector<PathRecord> expand(ReasoningTree& tree, std::size_t node_id, Backend& policy, Verifier& verifier,
                               const SearchConfig& config, const PromptSet& prompts = PromptSet::builtin());

ReasoningTree search(const CodeProblem& problem, Backend& policy, Verifier& verifier, const SearchConfig& config,
                     const PromptSet& prompts = PromptSet::builtin());

struct PreferencePair {
  std::string problem_id;
  std::size_t parent_id = 0;
  std::size_t chosen_id = 0;
  std::size_t rejected_id = 0;
  std::string prefix;  // problem statement, blank line, partial CoT up to the parent
  std::string chosen_step;
  std::string rejected_step;
  double chosen_score = 0;
  double rejected_score = 0;
};

void to_json(Json& j, const PreferencePair& p);
void from_json(const Json& j, PreferencePair& p);

/// Joins the problem statement and a partial CoT the way pair prefixes do.
std::string pair_prefix(const std::string& statement, const std::string& partial_cot);

std::vector<PreferencePair> extract_pairs(const ReasoningTree& tree, const SearchConfig& config);

}  // namespace codecot
