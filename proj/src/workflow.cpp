#include "codecot/workflow.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <regex>

#include "codecot/cot_format.hpp"
#include "codecot/json_io.hpp"
#include "codecot/ngram.hpp"
#include "codecot/sandbox.hpp"

namespace codecot {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string complete_one(Backend& backend, std::vector<ChatMessage> messages, const SamplingParams& sampling,
                         std::optional<std::int64_t> seed = std::nullopt) {
  CompletionRequest req;
  req.seed = seed;
  req.messages = std::move(messages);
  req.temperature = sampling.temperature;
  req.max_tokens = sampling.max_tokens;
  auto resp = backend.complete(req);
  return resp.samples.empty() ? std::string() : resp.samples.front();
}

std::string render_reasoning(const std::vector<std::string>& steps) {
  std::string out;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (i) out += "\n\n";
    out += "Step " + std::to_string(i + 1) + ": " + steps[i];
  }
  return out;
}

std::string redact(const std::string& text, const std::vector<std::pair<std::size_t, std::size_t>>& spans) {
  std::string out;
  std::size_t pos = 0;
  for (const auto& [b, e] : spans) {
    out += text.substr(pos, b - pos);
    out += "[redacted]";
    pos = e;
  }
  out += text.substr(pos);
  return out;
}

std::string without_decision_line(const std::string& reply) {
  static const std::regex kLine(R"(^[ \t]*DECISION\s*:.*$)", std::regex::icase | std::regex::multiline);
  return trim(std::regex_replace(reply, kLine, ""));
}

}  // namespace

void WorkflowConfig::validate() const {
  if (max_feedback_attempts < 1) throw ValidationError("max_feedback_attempts", "must be >= 1");
  if (provide_reference_after > max_feedback_attempts) {
    throw ValidationError("provide_reference_after", "must not exceed max_feedback_attempts");
  }
  if (max_steps_per_attempt < 1) throw ValidationError("max_steps_per_attempt", "must be >= 1");
  if (leak_ngram < 1) throw ValidationError("leak_ngram", "must be >= 1");
  if (sampling.temperature < 0) throw ValidationError("temperature", "must be >= 0");
}

void to_json(Json& j, const WorkflowConfig& c) {
  j = Json{{"max_feedback_attempts", c.max_feedback_attempts},
           {"thinking_backend", c.thinking_backend},
           {"reflection_backend", c.reflection_backend},
           {"temperature", c.sampling.temperature},
           {"max_tokens", c.sampling.max_tokens},
           {"provide_reference_after", c.provide_reference_after},
           {"max_steps_per_attempt", c.max_steps_per_attempt},
           {"leak_ngram", c.leak_ngram},
           {"seed", c.seed ? Json(*c.seed) : Json(nullptr)}};
}

void from_json(const Json& j, WorkflowConfig& c) {
  c = WorkflowConfig{};
  c.max_feedback_attempts = j.value("max_feedback_attempts", c.max_feedback_attempts);
  c.thinking_backend = j.value("thinking_backend", c.thinking_backend);
  c.reflection_backend = j.value("reflection_backend", c.reflection_backend);
  c.sampling.temperature = j.value("temperature", c.sampling.temperature);
  c.sampling.max_tokens = j.value("max_tokens", c.sampling.max_tokens);
  c.provide_reference_after = j.value("provide_reference_after", c.provide_reference_after);
  c.max_steps_per_attempt = j.value("max_steps_per_attempt", c.max_steps_per_attempt);
  c.leak_ngram = j.value("leak_ngram", c.leak_ngram);
  if (auto it = j.find("seed"); it != j.end() && !it->is_null()) c.seed = it->get<std::int64_t>();
}

std::string to_string(WorkflowPhase p) {
  switch (p) {
    case WorkflowPhase::thinking: return "thinking";
    case WorkflowPhase::reflecting_on_step: return "reflecting_on_step";
    case WorkflowPhase::executing: return "executing";
    case WorkflowPhase::reflecting_on_failure: return "reflecting_on_failure";
    case WorkflowPhase::done_success: return "done_success";
    case WorkflowPhase::done_failure: return "done_failure";
  }
  return "?";
}

std::string to_string(TranscriptEventKind k) {
  switch (k) {
    case TranscriptEventKind::thinking: return "thinking";
    case TranscriptEventKind::gate: return "gate";
    case TranscriptEventKind::answer: return "answer";
    case TranscriptEventKind::execution: return "execution";
    case TranscriptEventKind::failure_reflection: return "failure_reflection";
  }
  return "?";
}

void to_json(Json& j, const TranscriptEvent& e) {
  j = Json{{"kind", to_string(e.kind)}};
  if (e.kind == TranscriptEventKind::thinking) j["steps"] = e.steps;
  if (!e.text.empty()) j["text"] = e.text;
  if (e.verdict) j["verdict"] = *e.verdict;
}

void to_json(Json& j, const WorkflowState& s) {
  j = Json{{"phase", to_string(s.phase)}, {"attempt", s.attempt}, {"transcript", s.transcript}};
}

GateResult parse_gate_reply(const std::string& reply) {
  GateResult g;
  g.reply = reply;
  static const std::regex kLabeled(R"(DECISION\s*:\s*(CONTINUE|EMIT)\b)", std::regex::icase);
  std::string label;
  for (auto it = std::sregex_iterator(reply.begin(), reply.end(), kLabeled); it != std::sregex_iterator(); ++it) {
    label = (*it)[1].str();  // the last labeled decision counts
  }
  if (label.empty()) {
    static const std::regex kContinue(R"(\bCONTINUE\b)", std::regex::icase);
    static const std::regex kEmit(R"(\bEMIT\b)", std::regex::icase);
    const bool c = std::regex_search(reply, kContinue);
    const bool e = std::regex_search(reply, kEmit);
    if (c != e) label = c ? "continue" : "emit";
  }
  if (label.empty()) {
    spdlog::warn("unparseable gate reply; continuing reasoning");
    return g;
  }
  g.parsed = true;
  g.decision = std::toupper(static_cast<unsigned char>(label[0])) == 'E' ? GateDecision::emit_answer
                                                                          : GateDecision::continue_reasoning;
  return g;
}

GateResult gate_step(const CodeProblem& problem, const std::vector<std::string>& steps, Backend& backend,
                     const PromptSet& prompts, const SamplingParams& sampling) {
  if (steps.empty()) throw ValidationError("gate_needs_steps", "gate_step needs at least one thinking step");
  const auto reply = complete_one(
      backend,
      {{Role::system, prompts.render("reflection_gate")},
       {Role::user, prompts.render("reflection_gate_user",
                                   {{"statement", problem.statement}, {"reasoning", render_reasoning(steps)}})}},
      sampling);
  return parse_gate_reply(reply);
}

void to_json(Json& j, const ErrorAnalysisReport& r) {
  j = Json{{"text", r.text},
           {"verdict_summary", r.verdict_summary},
           {"code", r.code},
           {"reference_id", r.reference_id ? Json(*r.reference_id) : Json(nullptr)},
           {"regenerated", r.regenerated},
           {"redacted", r.redacted},
           {"fallback", r.fallback}};
}

std::string summarize_verdict(const Verdict& v) {
  std::string s = "status: " + to_string(v.status) + "\ntests passed: " + std::to_string(v.tests_passed) + "/" +
                  std::to_string(v.tests_run);
  if (!v.detail.empty()) s += "\ndetail: " + v.detail;
  for (const auto& f : v.failures) {
    s += "\ntest " + std::to_string(f.test_index);
    if (!f.expected.empty()) s += "\nexpected:\n" + f.expected;
    s += "\nactual:\n" + f.actual;
    if (!f.stderr_excerpt.empty()) s += "\nstderr:\n" + f.stderr_excerpt;
  }
  return s;
}

ErrorAnalysisReport reflect_on_failure(const CodeProblem& problem, const std::string& code, const Verdict& verdict,
                                       const std::optional<std::string>& reference, Backend& backend,
                                       const PromptSet& prompts, const SamplingParams& sampling,
                                       std::size_t leak_ngram) {
  if (verdict.passed()) throw ValidationError("reflect_needs_failure", "verdict passed; nothing to analyse");
  ErrorAnalysisReport report;
  report.code = code;
  report.verdict_summary = summarize_verdict(verdict);
  if (reference) report.reference_id = "reference_solutions[0]";

  const std::vector<ChatMessage> messages{
      {Role::system, prompts.render("reflection_report")},
      {Role::user,
       prompts.render("reflection_report_user",
                      {{"statement", problem.statement},
                       {"code", code},
                       {"verdict", report.verdict_summary},
                       {"reference_section",
                        reference ? prompts.render("reflection_reference", {{"reference", *reference}}) + "\n" : ""}})}};

  std::string text = trim(strip_reserved_tags(complete_one(backend, messages, sampling)));
  if (reference && !text.empty() && ngram_overlap(text, *reference, leak_ngram)) {
    spdlog::info("report for {} quotes the reference; regenerating", problem.id);
    report.regenerated = true;
    text = trim(strip_reserved_tags(complete_one(backend, messages, sampling)));
    if (!text.empty() && ngram_overlap(text, *reference, leak_ngram)) {
      text = trim(redact(text, overlapping_spans(text, *reference, leak_ngram)));
      report.redacted = true;
    }
  }
  if (text.empty()) {
    report.fallback = true;
    text = "The submitted code did not pass verification (" + to_string(verdict.status) + ").";
    if (!verdict.detail.empty()) text += " Detail: " + verdict.detail + ".";
    if (!verdict.failures.empty()) {
      const auto& f = verdict.failures.front();
      text += " On test " + std::to_string(f.test_index) + " the expected output was \"" + trim(f.expected) +
              "\" but the program produced \"" + trim(f.actual) + "\".";
    }
  }
  report.text = text;
  return report;
}

std::vector<std::string> split_thinking_reply(const std::string& reply) {
  std::string head = reply;
  if (auto blocks = find_code_blocks(reply); !blocks.empty()) head = reply.substr(0, blocks.front().offset);
  std::vector<std::string> steps;
  const std::string marker(tags::kStep);
  std::size_t pos = 0;
  while (true) {
    const auto next = head.find(marker, pos);
    auto step = trim(strip_reserved_tags(head.substr(pos, next == std::string::npos ? std::string::npos : next - pos)));
    if (!step.empty()) steps.push_back(std::move(step));
    if (next == std::string::npos) break;
    pos = next + marker.size();
  }
  return steps;
}

CotTrace prune_trivial_reflections(const Transcript& transcript, const std::string& problem_id) {
  CotTrace trace;
  trace.problem_id = problem_id;
  for (const auto& e : transcript) {
    switch (e.kind) {
      case TranscriptEventKind::thinking:
        if (e.steps.empty()) break;
        if (!trace.segments.empty() && trace.segments.back().kind == SegmentKind::thinking) {
          auto& steps = trace.segments.back().steps;
          steps.insert(steps.end(), e.steps.begin(), e.steps.end());
        } else {
          trace.segments.push_back(Segment::thinking(e.steps));
        }
        break;
      case TranscriptEventKind::failure_reflection:
        if (!trace.segments.empty() && trace.segments.back().kind == SegmentKind::reflection) {
          trace.segments.back().steps.front() += "\n\n" + e.text;
        } else {
          trace.segments.push_back(Segment::reflection(e.text));
        }
        break;
      case TranscriptEventKind::answer:
        trace.final_code = e.text;
        break;
      case TranscriptEventKind::execution:
        trace.verdict = e.verdict;
        break;
      case TranscriptEventKind::gate:
        break;
    }
  }
  return trace;
}

Transcript transcript_of(const CotTrace& trace) {
  Transcript t;
  for (const auto& s : trace.segments) {
    TranscriptEvent e;
    e.kind = s.kind == SegmentKind::thinking ? TranscriptEventKind::thinking : TranscriptEventKind::failure_reflection;
    if (s.kind == SegmentKind::thinking) {
      e.steps = s.steps;
    } else {
      e.text = s.steps.front();
    }
    t.push_back(std::move(e));
  }
  TranscriptEvent answer;
  answer.kind = TranscriptEventKind::answer;
  answer.text = trace.final_code;
  t.push_back(std::move(answer));
  if (trace.verdict) {
    TranscriptEvent exec;
    exec.kind = TranscriptEventKind::execution;
    exec.verdict = trace.verdict;
    t.push_back(std::move(exec));
  }
  return t;
}

void to_json(Json& j, const FailureRecord& f) {
  j = Json{{"problem_id", f.problem_id}, {"reason", f.reason}, {"attempts", f.attempts}, {"transcript", f.transcript}};
}

CotMaker::CotMaker(WorkflowConfig config, BackendPtr thinking, BackendPtr reflection, Verifier& verifier,
                   PromptSet prompts)
    : config_(std::move(config)),
      thinking_(std::move(thinking)),
      reflection_(std::move(reflection)),
      verifier_(verifier),
      prompts_(std::move(prompts)) {
  config_.validate();
  if (!thinking_ || !reflection_) throw ValidationError("backends_required", "thinking and reflection backends");
}

MakeOutcome CotMaker::make_trace(const CodeProblem& problem) {
  MakeOutcome out;
  WorkflowState& state = out.state;
  auto record = [&](TranscriptEvent e) { state.transcript.push_back(std::move(e)); };

  std::vector<ChatMessage> conversation{{Role::system, prompts_.render("thinking_agent")},
                                        {Role::user, "Problem:\n" + problem.statement}};
  std::vector<std::string> references_used;
  std::string last_code;

  try {
    while (true) {
      // Thinking until the gate (or the step cap) asks for an answer.
      state.phase = WorkflowPhase::thinking;
      std::vector<std::string> attempt_steps;
      std::string latest_reply;
      while (true) {
        latest_reply = complete_one(*thinking_, conversation, config_.sampling, config_.seed);
        conversation.push_back({Role::assistant, latest_reply});
        auto steps = split_thinking_reply(latest_reply);
        attempt_steps.insert(attempt_steps.end(), steps.begin(), steps.end());
        record({TranscriptEventKind::thinking, std::move(steps), "", std::nullopt});

        if (attempt_steps.size() >= config_.max_steps_per_attempt) break;
        if (attempt_steps.empty()) {
          if (extract_last_code_block(latest_reply)) break;
          conversation.push_back({Role::user, prompts_.render("thinking_continue",
                                                              {{"feedback", "Please reason step by step."}})});
          if (conversation.size() > 4 * config_.max_steps_per_attempt) break;
          continue;
        }

        state.phase = WorkflowPhase::reflecting_on_step;
        auto gate = gate_step(problem, attempt_steps, *reflection_, prompts_, config_.sampling);
        record({TranscriptEventKind::gate, {}, gate.reply, std::nullopt});
        if (gate.decision == GateDecision::emit_answer) break;
        state.phase = WorkflowPhase::thinking;
        auto notes = without_decision_line(gate.reply);
        conversation.push_back(
            {Role::user, prompts_.render("thinking_continue", {{"feedback", notes.empty() ? "Continue." : notes}})});
      }

      auto block = extract_last_code_block(latest_reply);
      if (!block) {
        conversation.push_back({Role::user, prompts_.render("thinking_emit")});
        const auto answer_reply = complete_one(*thinking_, conversation, config_.sampling, config_.seed);
        conversation.push_back({Role::assistant, answer_reply});
        block = extract_last_code_block(answer_reply);
      }

      Verdict verdict;
      if (!block || trim(block->code).empty()) {
        verdict = Verdict::crashed("no code answer was produced");
        last_code.clear();
      } else {
        last_code = block->code;
        record({TranscriptEventKind::answer, {}, last_code, std::nullopt});
        state.phase = WorkflowPhase::executing;
        verdict = verifier_.verify(problem, last_code);
        ++out.executions;
      }
      record({TranscriptEventKind::execution, {}, "", verdict});

      if (verdict.passed()) {
        state.phase = WorkflowPhase::done_success;
        break;
      }
      if (state.attempt >= config_.max_feedback_attempts) {
        state.phase = WorkflowPhase::done_failure;
        break;
      }

      state.phase = WorkflowPhase::reflecting_on_failure;
      std::optional<std::string> reference;
      if (state.attempt + 1 >= config_.provide_reference_after && !problem.reference_solutions.empty()) {
        reference = problem.reference_solutions.front();
        references_used.push_back(*reference);
      }
      auto report = reflect_on_failure(problem, last_code, verdict, reference, *reflection_, prompts_,
                                       config_.sampling, config_.leak_ngram);
      record({TranscriptEventKind::failure_reflection, {}, report.text, std::nullopt});
      conversation.push_back({Role::user, prompts_.render("thinking_feedback", {{"report", report.text}})});
      ++state.attempt;
    }
  } catch (const BackendError& e) {
    throw WorkflowAborted(std::string("backend failure: ") + e.what(), state);
  } catch (const SandboxUnavailable& e) {
    throw WorkflowAborted(std::string("sandbox unavailable: ") + e.what(), state);
  }

  out.attempts = state.attempt;
  auto fail = [&](std::string reason) {
    out.failure = FailureRecord{problem.id, std::move(reason), state.attempt, state.transcript};
    return out;
  };
  if (state.phase == WorkflowPhase::done_failure) return fail("attempts_exhausted");

  CotTrace trace = prune_trivial_reflections(state.transcript, problem.id);
  trace.generation_meta = Json{{"attempts", state.attempt},
                               {"executions", out.executions},
                               {"thinking_backend", thinking_->id()},
                               {"reflection_backend", reflection_->id()},
                               {"reference_assisted", !references_used.empty()}};
  try {
    trace.validate();
  } catch (const ValidationError& e) {
    return fail(std::string("invalid_trace: ") + e.what());
  }
  for (const auto& ref : references_used) {
    for (const auto& seg : trace.segments) {
      for (const auto& step : seg.steps) {
        if (ngram_overlap(step, ref, config_.leak_ngram)) return fail("reference_leak");
      }
    }
  }
  out.trace = std::move(trace);
  return out;
}

}  // namespace codecot
