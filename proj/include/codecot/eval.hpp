#pragma once

// Pass@1 evaluation: N samples per problem at a fixed temperature, last code
// block extracted, verified by direct test execution only.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "codecot/backend.hpp"
#include "codecot/execution_agent.hpp"
#include "codecot/prompts.hpp"
#include "codecot/types.hpp"

namespace codecot {

/// Exact non-negative rational, always reduced.
struct Fraction {
  std::int64_t num = 0;
  std::int64_t den = 1;

  Fraction() = default;
  Fraction(std::int64_t n, std::int64_t d);

  double value() const noexcept { return static_cast<double>(num) / static_cast<double>(den); }
  std::string str() const;  // "3/10"
  Fraction operator+(const Fraction& o) const;
  Fraction operator/(std::int64_t k) const;
  bool operator==(const Fraction&) const = default;
};

/// c / n. Throws std::invalid_argument for n == 0 or c > n.
Fraction pass_at_1_exact(std::size_t c, std::size_t n);
double pass_at_1(std::size_t c, std::size_t n);

inline constexpr const char* kExtractionRule = "last_code_block";
inline constexpr const char* kEstimator = "pass@1 = c / n per problem; reported values are unweighted means over problems";

struct EvalConfig {
  std::size_t n_samples = 10;
  double temperature = 0.2;
  std::size_t max_tokens = 4096;
  std::optional<std::int64_t> seed;
  std::size_t infra_retry_limit = 3;
  std::size_t workers = 1;

  void validate() const;
};

void to_json(Json& j, const EvalConfig& c);
void from_json(const Json& j, EvalConfig& c);

struct SampleRecord {
  std::string problem_id;
  std::size_t sample_index = 0;
  std::optional<std::string> code;
  VerdictStatus status = VerdictStatus::failed;
  bool passed = false;
  bool infra_failure = false;
  std::string detail;
};

void to_json(Json& j, const SampleRecord& s);
void from_json(const Json& j, SampleRecord& s);

struct ProblemResult {
  std::string problem_id;
  std::optional<Difficulty> difficulty;
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t infra_failures = 0;
  Fraction pass_at_1;
};

struct AggregateRow {
  std::string name;  // overall, easy, medium, hard, untagged
  std::size_t problems = 0;
  std::optional<Fraction> mean;
};

struct EvalReport {
  Json header;
  std::vector<ProblemResult> problems;
  std::vector<AggregateRow> rows;
  std::vector<SampleRecord> samples;

  const AggregateRow& row(const std::string& name) const;
  Json to_json() const;
  /// A sampling line, then an aligned table with Overall, Easy, Medium, Hard
  /// columns (percent).
  std::string text_table() const;
};

/// Rebuilds the per-problem counts and aggregates from a raw sample log.
EvalReport build_report(const std::vector<CodeProblem>& problems, const std::vector<SampleRecord>& samples,
                        const EvalConfig& config, const std::string& backend_id);

/// All samples for one problem; the unit of work for resumable runs. The
/// problem must carry tests, and verdicts reached through generated tests are
/// refused.
std::vector<SampleRecord> evaluate_problem(const CodeProblem& problem, Backend& backend, Verifier& verifier,
                                           const EvalConfig& config, const PromptSet& prompts = PromptSet::builtin());

/// Every problem must carry tests.
EvalReport evaluate(const std::vector<CodeProblem>& problems, Backend& backend, Verifier& verifier,
                    const EvalConfig& config, const PromptSet& prompts = PromptSet::builtin());

}  // namespace codecot
