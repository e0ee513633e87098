#pragma once

// Domain types shared by every stage of the pipeline.

#include <chrono>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace codecot {

using Json = nlohmann::json;

/// Raised when a value violates one of its type invariants. `rule()` names
/// the failing rule so callers can report it without parsing the message.
class ValidationError : public std::invalid_argument {
 public:
  ValidationError(std::string rule, const std::string& what)
      : std::invalid_argument(rule + ": " + what), rule_(std::move(rule)) {}
  const std::string& rule() const noexcept { return rule_; }

 private:
  std::string rule_;
};

enum class ProblemSource { collected, synthesized };
enum class Difficulty { easy, medium, hard };
enum class TestKind { stdin_stdout, expression_assert };

struct TestCase {
  TestKind kind = TestKind::stdin_stdout;
  std::string input;
  std::string expected_output;
  std::optional<std::string> assertion;

  static TestCase io(std::string input, std::string expected) {
    return {TestKind::stdin_stdout, std::move(input), std::move(expected), std::nullopt};
  }
  static TestCase expr(std::string assertion) {
    return {TestKind::expression_assert, {}, {}, std::move(assertion)};
  }

  void validate() const;
  bool operator==(const TestCase&) const = default;
};

struct CodeProblem {
  std::string id;
  std::string statement;
  ProblemSource source = ProblemSource::collected;
  std::optional<Difficulty> difficulty;
  std::vector<TestCase> test_cases;
  std::vector<std::string> reference_solutions;
  Json provenance = Json::object();

  void validate() const;
  bool operator==(const CodeProblem&) const = default;
};

enum class VerdictStatus { passed, failed, timeout, crashed, output_overflow, truncated_generation };

/// Which execution route produced a verdict.
enum class VerdictPath { none, direct, generated_judged };

struct TestFailure {
  std::size_t test_index = 0;
  std::string expected;
  std::string actual;
  std::string stderr_excerpt;
  bool operator==(const TestFailure&) const = default;
};

struct Verdict {
  VerdictStatus status = VerdictStatus::failed;
  std::size_t tests_run = 0;
  std::size_t tests_passed = 0;
  std::vector<TestFailure> failures;
  std::chrono::milliseconds duration{0};
  VerdictPath path = VerdictPath::none;
  std::string detail;  // cause for crashed/failed verdicts without a test failure

  bool passed() const noexcept { return status == VerdictStatus::passed; }
  void validate() const;

  static Verdict truncated(std::string detail = "generation exceeded token budget");
  static Verdict crashed(std::string detail, VerdictPath path = VerdictPath::none);

  bool operator==(const Verdict&) const = default;
};

enum class SegmentKind { thinking, reflection };

struct Segment {
  SegmentKind kind = SegmentKind::thinking;
  std::vector<std::string> steps;

  static Segment thinking(std::vector<std::string> steps) { return {SegmentKind::thinking, std::move(steps)}; }
  static Segment reflection(std::string text) { return {SegmentKind::reflection, {std::move(text)}}; }

  bool operator==(const Segment&) const = default;
};

struct CotTrace {
  std::string problem_id;
  std::vector<Segment> segments;
  std::string final_code;
  std::optional<Verdict> verdict;
  Json generation_meta = Json::object();

  /// Throws ValidationError naming the first violated rule.
  void validate() const;

  /// Equality over problem id, segments and final code only.
  bool structurally_equal(const CotTrace& other) const {
    return problem_id == other.problem_id && segments == other.segments && final_code == other.final_code;
  }
};

std::string to_string(ProblemSource);
std::string to_string(Difficulty);
std::string to_string(TestKind);
std::string to_string(VerdictStatus);
std::string to_string(VerdictPath);
std::string to_string(SegmentKind);

ProblemSource problem_source_from(const std::string&);
Difficulty difficulty_from(const std::string&);
TestKind test_kind_from(const std::string&);
VerdictStatus verdict_status_from(const std::string&);
VerdictPath verdict_path_from(const std::string&);
SegmentKind segment_kind_from(const std::string&);

}  // namespace codecot
