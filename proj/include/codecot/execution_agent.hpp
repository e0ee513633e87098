#pragma once

// Verification of candidate code: direct execution against known tests, or
// LLM-generated tests plus an LLM result checker when a problem has none.

#include <atomic>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

#include "codecot/backend.hpp"
#include "codecot/prompts.hpp"
#include "codecot/sandbox.hpp"
#include "codecot/types.hpp"

namespace codecot {

/// Anything that can turn (problem, code) into a verdict.
class Verifier {
 public:
  virtual ~Verifier() = default;
  virtual Verdict verify(const CodeProblem& problem, const std::string& code) = 0;
};

struct GeneratedTestBundle {
  std::string test_code;
  std::string generator_backend;
  std::optional<std::string> judged_by;
  std::size_t attempts = 1;
};

void to_json(Json& j, const GeneratedTestBundle& b);

class TestGenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CheckResult {
  bool correct = false;
  std::string rationale;
};

/// "CORRECT" / "INCORRECT: reason" with INCORRECT taking precedence; anything
/// else is incorrect with rationale "unparseable".
CheckResult parse_check_reply(const std::string& reply);

struct ExecutionConfig {
  SandboxLimits limits;
  std::size_t test_generation_retries = 3;  // regenerations after the first try
  SamplingParams sampling{0.2, 2048};
};

class ExecutionAgent : public Verifier {
 public:
  ExecutionAgent(std::shared_ptr<const SandboxExecutor> sandbox, BackendPtr test_generator, BackendPtr result_checker,
                 PromptSet prompts = PromptSet::builtin(), ExecutionConfig config = {});

  /// Throws TestGenerationError once every attempt failed the dry parse or
  /// was rejected by a reference solution; BackendError propagates.
  GeneratedTestBundle generate_tests(const CodeProblem& problem, const std::string& candidate_code);

  CheckResult check_result(const CodeProblem& problem, const std::string& test_code, const std::string& output);

  Verdict verify(const CodeProblem& problem, const std::string& code) override;

  const ExecutionConfig& config() const noexcept { return config_; }
  std::size_t verifications() const noexcept { return verifications_.load(); }

 private:
  std::shared_ptr<const SandboxExecutor> sandbox_;
  BackendPtr generator_;
  BackendPtr checker_;
  PromptSet prompts_;
  ExecutionConfig config_;
  std::atomic<std::size_t> verifications_{0};
};

}  // namespace codecot
