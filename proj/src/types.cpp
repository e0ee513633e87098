#include "codecot/types.hpp"

#include <array>
#include <utility>

namespace codecot {

namespace {

template <typename E, std::size_t N>
E lookup(const std::array<std::pair<E, const char*>, N>& table, const std::string& name, const char* what) {
  for (const auto& [value, text] : table) {
    if (name == text) return value;
  }
  throw ValidationError(std::string("unknown_") + what, "'" + name + "'");
}

template <typename E, std::size_t N>
std::string name_of(const std::array<std::pair<E, const char*>, N>& table, E value) {
  for (const auto& [v, text] : table) {
    if (v == value) return text;
  }
  return "?";
}

constexpr std::array<std::pair<ProblemSource, const char*>, 2> kSources{{
    {ProblemSource::collected, "collected"},
    {ProblemSource::synthesized, "synthesized"},
}};
constexpr std::array<std::pair<Difficulty, const char*>, 3> kDifficulties{{
    {Difficulty::easy, "easy"},
    {Difficulty::medium, "medium"},
    {Difficulty::hard, "hard"},
}};
constexpr std::array<std::pair<TestKind, const char*>, 2> kTestKinds{{
    {TestKind::stdin_stdout, "stdin_stdout"},
    {TestKind::expression_assert, "expression_assert"},
}};
constexpr std::array<std::pair<VerdictStatus, const char*>, 6> kStatuses{{
    {VerdictStatus::passed, "passed"},
    {VerdictStatus::failed, "failed"},
    {VerdictStatus::timeout, "timeout"},
    {VerdictStatus::crashed, "crashed"},
    {VerdictStatus::output_overflow, "output_overflow"},
    {VerdictStatus::truncated_generation, "truncated_generation"},
}};
constexpr std::array<std::pair<VerdictPath, const char*>, 3> kPaths{{
    {VerdictPath::none, "none"},
    {VerdictPath::direct, "direct"},
    {VerdictPath::generated_judged, "generated+judged"},
}};
constexpr std::array<std::pair<SegmentKind, const char*>, 2> kSegmentKinds{{
    {SegmentKind::thinking, "thinking"},
    {SegmentKind::reflection, "reflection"},
}};

}  // namespace

std::string to_string(ProblemSource v) { return name_of(kSources, v); }
std::string to_string(Difficulty v) { return name_of(kDifficulties, v); }
std::string to_string(TestKind v) { return name_of(kTestKinds, v); }
std::string to_string(VerdictStatus v) { return name_of(kStatuses, v); }
std::string to_string(VerdictPath v) { return name_of(kPaths, v); }
std::string to_string(SegmentKind v) { return name_of(kSegmentKinds, v); }

ProblemSource problem_source_from(const std::string& s) { return lookup(kSources, s, "source"); }
Difficulty difficulty_from(const std::string& s) { return lookup(kDifficulties, s, "difficulty"); }
TestKind test_kind_from(const std::string& s) { return lookup(kTestKinds, s, "test_kind"); }
VerdictStatus verdict_status_from(const std::string& s) { return lookup(kStatuses, s, "verdict_status"); }
VerdictPath verdict_path_from(const std::string& s) { return lookup(kPaths, s, "verdict_path"); }
SegmentKind segment_kind_from(const std::string& s) { return lookup(kSegmentKinds, s, "segment_kind"); }

void TestCase::validate() const {
  if (kind == TestKind::stdin_stdout && assertion.has_value()) {
    throw ValidationError("stdin_stdout_no_assertion", "stdin_stdout test carries an assertion");
  }
  if (kind == TestKind::expression_assert && (!assertion || assertion->empty())) {
    throw ValidationError("expression_assert_needs_assertion", "expression_assert test without assertion");
  }
}

void CodeProblem::validate() const {
  if (id.empty()) throw ValidationError("problem_id_nonempty", "problem id is empty");
  if (statement.empty()) throw ValidationError("statement_nonempty", "problem " + id + " has an empty statement");
  for (const auto& t : test_cases) t.validate();
}

void Verdict::validate() const {
  const bool all_pass = tests_run >= 1 && tests_passed == tests_run;
  if ((status == VerdictStatus::passed) != all_pass) {
    throw ValidationError("passed_iff_all_tests_pass", "status " + to_string(status) + " with " +
                                                           std::to_string(tests_passed) + "/" +
                                                           std::to_string(tests_run) + " tests");
  }
  if (tests_passed > tests_run) throw ValidationError("passed_le_run", "more tests passed than run");
  if (status == VerdictStatus::truncated_generation && tests_run != 0) {
    throw ValidationError("truncated_runs_nothing", "truncated generation with executed tests");
  }
}

Verdict Verdict::truncated(std::string detail) {
  Verdict v;
  v.status = VerdictStatus::truncated_generation;
  v.detail = std::move(detail);
  return v;
}

Verdict Verdict::crashed(std::string detail, VerdictPath path) {
  Verdict v;
  v.status = VerdictStatus::crashed;
  v.detail = std::move(detail);
  v.path = path;
  return v;
}

}  // namespace codecot
