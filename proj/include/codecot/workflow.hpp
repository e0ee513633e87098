#pragma once

// Multi-agent trace maker: a thinking agent reasons step by step, a
// reflection agent gates each step and analyses failed answers, and a
// verifier checks the code. Successful runs become pruned CotTraces.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "codecot/backend.hpp"
#include "codecot/execution_agent.hpp"
#include "codecot/prompts.hpp"
#include "codecot/types.hpp"

namespace codecot {

struct WorkflowConfig {
  std::size_t max_feedback_attempts = 3;
  std::string thinking_backend = "policy";
  std::string reflection_backend = "policy";
  SamplingParams sampling{0.2, 4096};
  std::size_t provide_reference_after = 2;  // first attempt that may benefit from the reference
  std::size_t max_steps_per_attempt = 16;   // gate is overridden with EMIT past this
  std::size_t leak_ngram = 10;
  std::optional<std::int64_t> seed;

  void validate() const;
};

void to_json(Json& j, const WorkflowConfig& c);
void from_json(const Json& j, WorkflowConfig& c);

enum class WorkflowPhase { thinking, reflecting_on_step, executing, reflecting_on_failure, done_success, done_failure };
std::string to_string(WorkflowPhase);

enum class TranscriptEventKind { thinking, gate, answer, execution, failure_reflection };
std::string to_string(TranscriptEventKind);

struct TranscriptEvent {
  TranscriptEventKind kind = TranscriptEventKind::thinking;
  std::vector<std::string> steps;  // thinking
  std::string text;                // gate reply, answer code, or report
  std::optional<Verdict> verdict;  // execution
};

using Transcript = std::vector<TranscriptEvent>;

void to_json(Json& j, const TranscriptEvent& e);

struct WorkflowState {
  WorkflowPhase phase = WorkflowPhase::thinking;
  std::size_t attempt = 1;
  Transcript transcript;
};

void to_json(Json& j, const WorkflowState& s);

enum class GateDecision { continue_reasoning, emit_answer };

struct GateResult {
  GateDecision decision = GateDecision::continue_reasoning;
  bool parsed = false;
  std::string reply;
};

/// "DECISION: X" wins; otherwise a reply naming exactly one of CONTINUE/EMIT;
/// anything else continues, with parsed = false.
GateResult parse_gate_reply(const std::string& reply);

GateResult gate_step(const CodeProblem& problem, const std::vector<std::string>& steps, Backend& backend,
                     const PromptSet& prompts, const SamplingParams& sampling);

struct ErrorAnalysisReport {
  std::string text;
  std::string verdict_summary;
  std::string code;
  std::optional<std::string> reference_id;
  bool regenerated = false;
  bool redacted = false;
  bool fallback = false;  // the agent returned nothing usable
};

void to_json(Json& j, const ErrorAnalysisReport& r);

std::string summarize_verdict(const Verdict& v);

/// `reference` is included in the prompt when given. A report sharing an
/// n-gram with it is regenerated once, then redacted span by span.
ErrorAnalysisReport reflect_on_failure(const CodeProblem& problem, const std::string& code, const Verdict& verdict,
                                       const std::optional<std::string>& reference, Backend& backend,
                                       const PromptSet& prompts, const SamplingParams& sampling,
                                       std::size_t leak_ngram = 10);

/// Drops gate output and execution bookkeeping, keeps failure reflections,
/// merges adjacent thinking. Does not validate.
CotTrace prune_trivial_reflections(const Transcript& transcript, const std::string& problem_id);

/// The transcript a pruned trace corresponds to (for idempotence checks).
Transcript transcript_of(const CotTrace& trace);

/// Steps from a thinking reply: text before the first code fence, split on
/// <step>, reserved tags removed, blank steps dropped.
std::vector<std::string> split_thinking_reply(const std::string& reply);

struct FailureRecord {
  std::string problem_id;
  std::string reason;
  std::size_t attempts = 0;
  Transcript transcript;
};

void to_json(Json& j, const FailureRecord& f);

struct MakeOutcome {
  std::optional<CotTrace> trace;
  std::optional<FailureRecord> failure;
  std::size_t executions = 0;
  std::size_t attempts = 0;
  WorkflowState state;
};

/// Infrastructure failure (backend or sandbox) with the state reached so far.
class WorkflowAborted : public std::runtime_error {
 public:
  WorkflowAborted(const std::string& what, WorkflowState state)
      : std::runtime_error(what), state_(std::move(state)) {}
  const WorkflowState& state() const noexcept { return state_; }

 private:
  WorkflowState state_;
};

class CotMaker {
 public:
  CotMaker(WorkflowConfig config, BackendPtr thinking, BackendPtr reflection, Verifier& verifier,
           PromptSet prompts = PromptSet::builtin());

  MakeOutcome make_trace(const CodeProblem& problem);

  const WorkflowConfig& config() const noexcept { return config_; }

 private:
  WorkflowConfig config_;
  BackendPtr thinking_;
  BackendPtr reflection_;
  Verifier& verifier_;
  PromptSet prompts_;
};

}  // namespace codecot
