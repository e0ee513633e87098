#include "codecot/problems.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <regex>
#include <set>
#include <sstream>

#include "codecot/json_io.hpp"

namespace codecot {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

bool looks_like_refusal(const std::string& text) {
  static constexpr std::array<std::string_view, 6> kPrefixes{
      "i'm sorry", "i am sorry", "i cannot", "i can't", "sorry, i", "as an ai",
  };
  const auto head = lower(text.substr(0, 64));
  return std::any_of(kPrefixes.begin(), kPrefixes.end(), [&](std::string_view p) { return head.rfind(p, 0) == 0; });
}

std::string single_reply(Backend& backend, const std::string& prompt, const SamplingParams& sampling) {
  CompletionRequest req;
  req.messages = {{Role::user, prompt}};
  req.temperature = sampling.temperature;
  req.max_tokens = sampling.max_tokens;
  auto resp = backend.complete(req);
  return resp.samples.empty() ? std::string() : resp.samples.front();
}

std::string join(const std::vector<std::string>& v, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += v[i];
  }
  return out;
}

}  // namespace

void to_json(Json& j, const LineError& e) { j = Json{{"line", e.line_number}, {"error", e.message}}; }

IngestReport ingest_problems_text(const std::string& text) {
  IngestReport report;
  std::set<std::string> seen;
  for (auto& line : read_jsonl_text(text)) {
    if (!line.value) {
      report.errors.push_back({line.line_number, line.error});
      continue;
    }
    CodeProblem p;
    try {
      p = line.value->get<CodeProblem>();
    } catch (const std::exception& e) {
      report.errors.push_back({line.line_number, e.what()});
      continue;
    }
    p.source = ProblemSource::collected;
    if (!seen.insert(p.id).second) {
      report.warnings.push_back("line " + std::to_string(line.line_number) + ": duplicate id '" + p.id +
                                "' ignored (first occurrence kept)");
      spdlog::warn("ingest: {}", report.warnings.back());
      continue;
    }
    report.problems.push_back(std::move(p));
  }
  return report;
}

IngestReport ingest_problems(const std::filesystem::path& path) { return ingest_problems_text(read_text_file(path)); }

void to_json(Json& j, const SeedSnippet& s) {
  j = Json{{"file_name", s.file_name}, {"function_names", s.function_names}, {"code", s.code}, {"origin", s.origin}};
}

void from_json(const Json& j, SeedSnippet& s) {
  s.file_name = j.at("file_name").get<std::string>();
  s.function_names = j.value("function_names", std::vector<std::string>{});
  s.code = j.at("code").get<std::string>();
  s.origin = j.value("origin", std::string());
  if (s.code.empty()) throw ValidationError("snippet_code_nonempty", "snippet " + s.file_name + " has no code");
}

std::vector<SeedSnippet> dedup_snippets(const std::vector<SeedSnippet>& snippets) {
  std::set<std::string> files;
  std::set<std::string> functions;
  std::vector<SeedSnippet> out;
  for (const auto& s : snippets) {
    const bool file_seen = files.count(s.file_name) != 0;
    const bool fn_seen = std::any_of(s.function_names.begin(), s.function_names.end(),
                                     [&](const std::string& f) { return functions.count(f) != 0; });
    if (file_seen || fn_seen) continue;
    files.insert(s.file_name);
    functions.insert(s.function_names.begin(), s.function_names.end());
    out.push_back(s);
  }
  return out;
}

void to_json(Json& j, const SynthesisFailure& f) {
  j = Json{{"seed_file", f.seed_file}, {"origin", f.origin}, {"reason", f.reason}};
}

std::string synthesized_problem_id(const SeedSnippet& seed) {
  return "syn-" + sha256_hex(seed.file_name + '\0' + seed.code).substr(0, 16);
}

SynthesisOutcome synthesize_problem(const SeedSnippet& seed, Backend& backend, const PromptSet& prompts,
                                    const SamplingParams& sampling) {
  const auto prompt = prompts.render("problem_generation", {{"file_name", seed.file_name},
                                                            {"function_names", join(seed.function_names, ", ")},
                                                            {"code", seed.code}});
  const auto statement = trim(single_reply(backend, prompt, sampling));
  if (statement.empty()) return SynthesisFailure{seed.file_name, seed.origin, "empty statement"};
  if (looks_like_refusal(statement)) return SynthesisFailure{seed.file_name, seed.origin, "refusal"};

  CodeProblem p;
  p.id = synthesized_problem_id(seed);
  p.statement = statement;
  p.source = ProblemSource::synthesized;
  p.provenance = Json{{"seed_file", seed.file_name},
                      {"seed_functions", seed.function_names},
                      {"seed_origin", seed.origin},
                      {"synthesis_backend", backend.id()}};
  return p;
}

SynthesisBatch synthesize_batch(const std::vector<SeedSnippet>& seeds, Backend& backend, const PromptSet& prompts,
                                const SamplingParams& sampling) {
  SynthesisBatch out;
  for (const auto& seed : seeds) {
    try {
      auto outcome = synthesize_problem(seed, backend, prompts, sampling);
      if (auto* p = std::get_if<CodeProblem>(&outcome)) {
        out.drafts.push_back(std::move(*p));
      } else {
        out.failures.push_back(std::get<SynthesisFailure>(std::move(outcome)));
      }
    } catch (const BackendError& e) {
      out.failures.push_back({seed.file_name, seed.origin, std::string("backend error: ") + e.what()});
    }
  }
  return out;
}

EvolveResult evolve_instruction(const CodeProblem& problem, Backend& backend, const PromptSet& prompts,
                                const SamplingParams& sampling) {
  EvolveResult out;
  out.problem = problem;
  std::string evolved;
  try {
    evolved = trim(single_reply(backend, prompts.render("evolve_instruction", {{"statement", problem.statement}}),
                                sampling));
  } catch (const BackendError& e) {
    out.degraded = true;
    out.warning = "evolution failed for " + problem.id + ": " + e.what();
    spdlog::warn("{}", out.warning);
    return out;
  }
  if (evolved.empty()) {
    out.degraded = true;
    out.warning = "evolution returned an empty statement for " + problem.id;
    spdlog::warn("{}", out.warning);
    return out;
  }

  out.problem.provenance["pre_evolution_statement"] = problem.statement;
  if (evolved == trim(problem.statement)) {
    out.no_change = true;
    out.problem.provenance["evolution"] = "no_change";
  } else {
    out.problem.statement = evolved;
    out.problem.provenance["evolution"] = "evolved";
  }
  return out;
}

void to_json(Json& j, const FilterDecision& d) {
  j = Json{{"clear_intent", d.clear_intent},
           {"challenging", d.challenging},
           {"self_contained", d.self_contained},
           {"rationale", d.rationale},
           {"accepted", d.accepted}};
}

FilterDecision parse_filter_judgement(std::string_view reply) {
  FilterDecision d;
  const std::string text = lower(std::string(reply));

  static const std::regex kLabeled(R"((clear_intent|challenging|self_contained)\s*[:=]\s*(yes|no|true|false))");
  static const std::regex kCompact(R"((yes|no)\s*/\s*(yes|no)\s*/\s*(yes|no))");
  static const std::regex kRationale(R"(rationale\s*[:=]\s*([^\n]*))", std::regex::icase);

  std::set<std::string> found;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), kLabeled); it != std::sregex_iterator(); ++it) {
    const auto key = (*it)[1].str();
    if (!found.insert(key).second) continue;  // first answer per label wins
    const bool yes = (*it)[2] == "yes" || (*it)[2] == "true";
    if (key == "clear_intent") d.clear_intent = yes;
    if (key == "challenging") d.challenging = yes;
    if (key == "self_contained") d.self_contained = yes;
  }

  if (found.size() != 3) {
    std::smatch m;
    if (!std::regex_search(text, m, kCompact)) {
      d = FilterDecision{};
      d.rationale = "unparseable";
      return d;
    }
    d.clear_intent = m[1] == "yes";
    d.challenging = m[2] == "yes";
    d.self_contained = m[3] == "yes";
  }

  std::smatch r;
  const std::string original(reply);
  if (std::regex_search(original, r, kRationale)) d.rationale = trim(r[1].str());
  d.accepted = d.clear_intent && d.challenging && d.self_contained;
  return d;
}

FilterDecision filter_problem(const CodeProblem& problem, Backend& backend, const PromptSet& prompts,
                              const SamplingParams& sampling) {
  const auto reply =
      single_reply(backend, prompts.render("difficulty_analysis", {{"statement", problem.statement}}), sampling);
  return parse_filter_judgement(reply);
}

}  // namespace codecot
