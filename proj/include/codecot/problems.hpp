#pragma once

// Stage 1: collecting, synthesizing, evolving and filtering code problems.
// Decontamination lives in ngram.hpp.

#include <filesystem>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "codecot/backend.hpp"
#include "codecot/prompts.hpp"
#include "codecot/types.hpp"

namespace codecot {

struct LineError {
  std::size_t line_number = 0;
  std::string message;
};

void to_json(Json& j, const LineError& e);

struct IngestReport {
  std::vector<CodeProblem> problems;
  std::vector<LineError> errors;
  std::vector<std::string> warnings;
};

/// Maps every valid JSONL record to a collected CodeProblem. Bad lines are
/// reported by number and skipped; a repeated id keeps its first occurrence.
/// Throws IoError when the file cannot be read.
IngestReport ingest_problems(const std::filesystem::path& path);
IngestReport ingest_problems_text(const std::string& text);

struct SeedSnippet {
  std::string file_name;
  std::vector<std::string> function_names;
  std::string code;
  std::string origin;
};

void to_json(Json& j, const SeedSnippet& s);
void from_json(const Json& j, SeedSnippet& s);

/// Keeps the first snippet for every file name and every function name;
/// a snippet colliding on either key is dropped. Order is stable.
std::vector<SeedSnippet> dedup_snippets(const std::vector<SeedSnippet>& snippets);

struct SynthesisFailure {
  std::string seed_file;
  std::string origin;
  std::string reason;
};

void to_json(Json& j, const SynthesisFailure& f);

using SynthesisOutcome = std::variant<CodeProblem, SynthesisFailure>;

/// Drafts a new problem from a seed. Empty or refusal replies produce a
/// SynthesisFailure; backend errors propagate.
SynthesisOutcome synthesize_problem(const SeedSnippet& seed, Backend& backend, const PromptSet& prompts,
                                    const SamplingParams& sampling = {0.7, 2048});

struct SynthesisBatch {
  std::vector<CodeProblem> drafts;
  std::vector<SynthesisFailure> failures;
};

/// synthesize_problem over many seeds; backend errors become failure records.
SynthesisBatch synthesize_batch(const std::vector<SeedSnippet>& seeds, Backend& backend, const PromptSet& prompts,
                                const SamplingParams& sampling = {0.7, 2048});

/// Stable id for a problem synthesized from `seed`.
std::string synthesized_problem_id(const SeedSnippet& seed);

struct EvolveResult {
  CodeProblem problem;
  bool no_change = false;  // the evolved text equals the original
  bool degraded = false;   // backend failed; original passed through
  std::string warning;
};

EvolveResult evolve_instruction(const CodeProblem& problem, Backend& backend, const PromptSet& prompts,
                                const SamplingParams& sampling = {0.7, 2048});

struct FilterDecision {
  bool clear_intent = false;
  bool challenging = false;
  bool self_contained = false;
  std::string rationale;
  bool accepted = false;  // all three judgments hold
};

void to_json(Json& j, const FilterDecision& d);

/// Reads "clear_intent: yes" style lines or a compact "yes/no/yes" line.
/// Anything else is rejected with rationale "unparseable".
FilterDecision parse_filter_judgement(std::string_view reply);

FilterDecision filter_problem(const CodeProblem& problem, Backend& backend, const PromptSet& prompts,
                              const SamplingParams& sampling = {0.0, 512});

}  // namespace codecot
