#pragma once

// Training-ready dataset export: SFT records from verified traces, step-DPO
// records from preference pairs, each with a manifest next to the data file.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "codecot/execution_agent.hpp"
#include "codecot/tree.hpp"
#include "codecot/types.hpp"

namespace codecot {

struct SftRecord {
  std::string instruction;
  std::string response;  // serialized CoT
  bool operator==(const SftRecord&) const = default;
};

void to_json(Json& j, const SftRecord& r);
void from_json(const Json& j, SftRecord& r);  // validates that response parses

struct StepDpoRecord {
  std::string instruction;  // the pair prefix, byte for byte
  std::string chosen;
  std::string rejected;
  double chosen_score = 0;
  double rejected_score = 0;
  bool operator==(const StepDpoRecord&) const = default;
};

void to_json(Json& j, const StepDpoRecord& r);
void from_json(const Json& j, StepDpoRecord& r);

SftRecord make_sft_record(const CodeProblem& problem, const CotTrace& trace);

/// Throws ValidationError if the pair cannot be a training record.
StepDpoRecord make_step_dpo_record(const PreferencePair& pair);

/// Hyperparameters a downstream trainer needs to reproduce the reference
/// SFT and step-DPO runs. Frozen; tests compare against a literal table.
Json training_constants();

struct ExportResult {
  std::filesystem::path data_file;
  std::filesystem::path manifest_file;
  std::size_t records = 0;
  std::vector<Json> excluded;  // {problem_id, reason}
  std::string sha256;
  Json manifest;
};

std::filesystem::path manifest_path_for(const std::filesystem::path& data_file);

/// Writes one line per passing trace. Traces whose problem is unknown, whose
/// stored verdict did not pass, or which fail re-verification (when a
/// verifier is given) are excluded and listed in the result and manifest.
ExportResult export_sft(const std::vector<CotTrace>& traces, const std::vector<CodeProblem>& problems,
                        const std::filesystem::path& out, Verifier* reverify = nullptr,
                        const Json& config_echo = Json::object());

/// All pairs are checked before anything is written.
ExportResult export_step_dpo(const std::vector<PreferencePair>& pairs, const std::filesystem::path& out,
                             const Json& config_echo = Json::object());

}  // namespace codecot
