#include "codecot/execution_agent.hpp"

#include <spdlog/spdlog.h>

#include <cctype>

#include "codecot/cot_format.hpp"

namespace codecot {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

std::string ask(Backend& backend, const std::string& prompt, const SamplingParams& sampling) {
  CompletionRequest req;
  req.messages = {{Role::user, prompt}};
  req.temperature = sampling.temperature;
  req.max_tokens = sampling.max_tokens;
  auto resp = backend.complete(req);
  return resp.samples.empty() ? std::string() : resp.samples.front();
}

}  // namespace

void to_json(Json& j, const GeneratedTestBundle& b) {
  j = Json{{"test_code", b.test_code},
           {"generator_backend", b.generator_backend},
           {"judged_by", b.judged_by ? Json(*b.judged_by) : Json(nullptr)},
           {"attempts", b.attempts}};
}

CheckResult parse_check_reply(const std::string& reply) {
  const auto text = trim(reply);
  const auto up = upper(text);
  if (auto pos = up.find("INCORRECT"); pos != std::string::npos) {
    auto reason = trim(text.substr(pos + 9));
    if (!reason.empty() && reason.front() == ':') reason = trim(reason.substr(1));
    return {false, reason};
  }
  if (up.find("CORRECT") != std::string::npos) return {true, ""};
  return {false, "unparseable"};
}

ExecutionAgent::ExecutionAgent(std::shared_ptr<const SandboxExecutor> sandbox, BackendPtr test_generator,
                               BackendPtr result_checker, PromptSet prompts, ExecutionConfig config)
    : sandbox_(std::move(sandbox)),
      generator_(std::move(test_generator)),
      checker_(std::move(result_checker)),
      prompts_(std::move(prompts)),
      config_(std::move(config)) {
  if (!sandbox_) throw ValidationError("sandbox_required", "execution agent needs a sandbox");
  config_.limits.validate();
}

GeneratedTestBundle ExecutionAgent::generate_tests(const CodeProblem& problem, const std::string& candidate_code) {
  if (!generator_) throw TestGenerationError("no test generator backend configured");
  const auto prompt = prompts_.render("test_generation", {{"statement", problem.statement}, {"code", candidate_code}});
  const std::size_t attempts = config_.test_generation_retries + 1;
  std::string last_problem;

  for (std::size_t attempt = 1; attempt <= attempts; ++attempt) {
    const auto reply = ask(*generator_, prompt, config_.sampling);
    const auto block = extract_last_code_block(reply);
    const std::string test_code = block ? block->code : trim(reply);
    if (trim(test_code).empty()) {
      last_problem = "empty test code";
      continue;
    }

    ShimJob parse;
    parse.mode = ShimMode::dry_parse;
    parse.code = test_code;
    const auto parsed = sandbox_->run_job(parse, config_.limits);
    if (!parsed.ok) {
      last_problem = "dry parse failed: " + parsed.exception_type.value_or(parsed.protocol_detail);
      spdlog::debug("test generation attempt {} for {}: {}", attempt, problem.id, last_problem);
      continue;
    }

    if (!problem.reference_solutions.empty()) {
      ShimJob check;
      check.mode = ShimMode::run_test_code;
      check.code = problem.reference_solutions.front();
      check.test_code = test_code;
      const auto ref = sandbox_->run_job(check, config_.limits);
      if (!ref.ok || ref.timed_out || ref.protocol_error) {
        last_problem = "reference solution fails generated tests";
        spdlog::info("discarding generated tests for {}: {}", problem.id, last_problem);
        continue;
      }
    }
    return {test_code, generator_->id(), std::nullopt, attempt};
  }
  throw TestGenerationError("test generation failed after " + std::to_string(attempts) + " attempts (" +
                            last_problem + ")");
}

CheckResult ExecutionAgent::check_result(const CodeProblem& problem, const std::string& test_code,
                                         const std::string& output) {
  if (!checker_) throw ValidationError("checker_required", "no result checker backend configured");
  const auto reply = ask(*checker_,
                         prompts_.render("result_checker",
                                         {{"statement", problem.statement}, {"test_code", test_code}, {"output", output}}),
                         config_.sampling);
  return parse_check_reply(reply);
}

Verdict ExecutionAgent::verify(const CodeProblem& problem, const std::string& code) {
  ++verifications_;
  if (!problem.test_cases.empty()) {
    auto v = sandbox_->run_candidate(code, problem.test_cases, config_.limits);
    v.path = VerdictPath::direct;
    return v;
  }

  const auto start = std::chrono::steady_clock::now();
  GeneratedTestBundle bundle;
  try {
    bundle = generate_tests(problem, code);
  } catch (const TestGenerationError& e) {
    return Verdict::crashed(std::string("test generation failed: ") + e.what(), VerdictPath::generated_judged);
  }

  ShimJob job;
  job.mode = ShimMode::run_test_code;
  job.code = code;
  job.test_code = bundle.test_code;
  const auto r = sandbox_->run_job(job, config_.limits);

  Verdict v;
  v.path = VerdictPath::generated_judged;
  v.tests_run = 1;
  TestFailure failure{0, "", r.stdout_text.substr(0, 2000), r.stderr_excerpt};
  if (r.timed_out || r.cpu_exceeded) {
    v.status = VerdictStatus::timeout;
  } else if (r.stdout_overflow) {
    v.status = VerdictStatus::output_overflow;
  } else if (r.protocol_error || r.term_signal) {
    v.status = VerdictStatus::crashed;
    v.detail = r.protocol_error ? r.protocol_detail : "killed by signal " + std::to_string(r.term_signal);
  } else if (!r.ok) {
    const bool assertion = r.exception_type.value_or("") == "AssertionError";
    v.status = assertion ? VerdictStatus::failed : VerdictStatus::crashed;
    v.detail = r.exception_type.value_or("error");
  } else {
    const auto judgement = check_result(problem, bundle.test_code, r.stdout_text);
    if (judgement.correct) {
      v.status = VerdictStatus::passed;
      v.tests_passed = 1;
    } else {
      v.status = VerdictStatus::failed;
      v.detail = "result checker: " + judgement.rationale;
      failure.expected = "checker verdict CORRECT";
    }
  }
  if (!v.passed()) v.failures.push_back(std::move(failure));
  v.duration = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
  return v;
}

}  // namespace codecot
