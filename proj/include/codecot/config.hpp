#pragma once

// Pipeline configuration file and per-stage run checkpoints.

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "codecot/backend.hpp"
#include "codecot/eval.hpp"
#include "codecot/execution_agent.hpp"
#include "codecot/prompts.hpp"
#include "codecot/sandbox.hpp"
#include "codecot/tree.hpp"
#include "codecot/workflow.hpp"

namespace codecot {

/// Every problem found while loading a config, reported together.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  std::vector<std::string> problems_;
};

struct BackendSpec {
  std::string id;
  std::string type;  // "openai" or "mock"
  std::string base_url;
  std::string path = "/v1/chat/completions";
  std::string model;
  std::string api_key_env;
  bool supports_n = true;
  BackendPolicy policy;
  std::filesystem::path script;  // mock fixture
};

struct ProblemStageConfig {
  std::string synthesis_backend = "policy";
  std::string evolve_backend = "policy";
  std::string filter_backend = "policy";
  SamplingParams synthesis_sampling{0.7, 2048};
  std::size_t ngram = 10;
};

struct CotStageConfig {
  WorkflowConfig workflow;
  std::string test_generator_backend;  // empty: problems without tests cannot be verified
  std::string result_checker_backend;
  std::size_t test_generation_retries = 3;
};

struct SearchStageConfig {
  SearchConfig search;
  std::string policy_backend = "policy";
};

struct EvalStageConfig {
  EvalConfig eval;
  std::string backend = "policy";
};

struct PipelineConfig {
  std::map<std::string, BackendSpec> backends;
  std::filesystem::path base_dir;  // relative paths resolve against this
  std::filesystem::path data_dir = "data";
  std::optional<std::filesystem::path> prompts_dir;
  SandboxConfig sandbox;
  SandboxLimits limits;
  ProblemStageConfig problems;
  CotStageConfig cot;
  SearchStageConfig search;
  EvalStageConfig eval;
  Json raw = Json::object();  // interpolated config as loaded

  /// Parses and validates; throws ConfigError listing every violation.
  static PipelineConfig from_json(const Json& j, const std::filesystem::path& base_dir = {});
  static PipelineConfig load(const std::filesystem::path& file);

  /// Fresh backend instances for every configured id.
  BackendRegistry make_backends() const;
  PromptSet make_prompts() const;
  std::filesystem::path resolve(const std::filesystem::path& p) const;
};

/// Replaces every ${NAME} with the environment value. Unset names are
/// collected into `missing` and left empty.
std::string interpolate_env(const std::string& text, std::vector<std::string>& missing);

struct RunCheckpoint {
  std::string run_id;
  std::string stage;
  std::string config_hash;
  std::vector<std::string> completed;  // in completion order

  bool contains(const std::string& id) const;
  Json to_json() const;
  static RunCheckpoint from_json(const Json& j);

  /// Atomic replace via a temporary file and rename.
  void save(const std::filesystem::path& file) const;
  static std::optional<RunCheckpoint> load(const std::filesystem::path& file);
};

class CheckpointMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Stable hash of everything that determines a stage's output.
std::string stage_config_hash(const std::string& stage, const Json& inputs);

}  // namespace codecot
