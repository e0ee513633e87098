#include "codecot/eval.hpp"

#include <spdlog/spdlog.h>

#include <atomic>
#include <cctype>
#include <future>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

#include "codecot/cot_format.hpp"
#include "codecot/json_io.hpp"
#include "codecot/sandbox.hpp"

namespace codecot {

Fraction::Fraction(std::int64_t n, std::int64_t d) {
  if (d <= 0 || n < 0) throw std::invalid_argument("fraction needs n >= 0 and d > 0");
  const auto g = std::gcd(n, d);
  num = g ? n / g : 0;
  den = g ? d / g : 1;
}

std::string Fraction::str() const { return std::to_string(num) + "/" + std::to_string(den); }

Fraction Fraction::operator+(const Fraction& o) const {
  const auto l = std::lcm(den, o.den);
  return {num * (l / den) + o.num * (l / o.den), l};
}

Fraction Fraction::operator/(std::int64_t k) const {
  if (k <= 0) throw std::invalid_argument("division by non-positive count");
  return {num, den * k};
}

Fraction pass_at_1_exact(std::size_t c, std::size_t n) {
  if (n == 0) throw std::invalid_argument("pass@1 needs n >= 1");
  if (c > n) throw std::invalid_argument("pass@1 needs c <= n");
  return {static_cast<std::int64_t>(c), static_cast<std::int64_t>(n)};
}

double pass_at_1(std::size_t c, std::size_t n) { return pass_at_1_exact(c, n).value(); }

void EvalConfig::validate() const {
  if (n_samples < 1) throw ValidationError("n_samples", "must be >= 1");
  if (temperature < 0) throw ValidationError("temperature", "must be >= 0");
  if (workers < 1) throw ValidationError("workers", "must be >= 1");
}

void to_json(Json& j, const EvalConfig& c) {
  j = Json{{"n_samples", c.n_samples},
           {"temperature", c.temperature},
           {"max_tokens", c.max_tokens},
           {"seed", c.seed ? Json(*c.seed) : Json(nullptr)},
           {"infra_retry_limit", c.infra_retry_limit},
           {"workers", c.workers}};
}

void from_json(const Json& j, EvalConfig& c) {
  c = EvalConfig{};
  c.n_samples = j.value("n_samples", c.n_samples);
  c.temperature = j.value("temperature", c.temperature);
  c.max_tokens = j.value("max_tokens", c.max_tokens);
  if (auto it = j.find("seed"); it != j.end() && !it->is_null()) c.seed = it->get<std::int64_t>();
  c.infra_retry_limit = j.value("infra_retry_limit", c.infra_retry_limit);
  c.workers = j.value("workers", c.workers);
  c.validate();
}

void to_json(Json& j, const SampleRecord& s) {
  j = Json{{"problem_id", s.problem_id},
           {"sample_index", s.sample_index},
           {"code", s.code ? Json(*s.code) : Json(nullptr)},
           {"status", to_string(s.status)},
           {"passed", s.passed},
           {"infra_failure", s.infra_failure},
           {"detail", s.detail}};
}

void from_json(const Json& j, SampleRecord& s) {
  s.problem_id = j.at("problem_id").get<std::string>();
  s.sample_index = j.at("sample_index").get<std::size_t>();
  if (auto it = j.find("code"); it != j.end() && !it->is_null()) s.code = it->get<std::string>();
  s.status = verdict_status_from(j.at("status").get<std::string>());
  s.passed = j.at("passed").get<bool>();
  s.infra_failure = j.value("infra_failure", false);
  s.detail = j.value("detail", std::string());
}

const AggregateRow& EvalReport::row(const std::string& name) const {
  for (const auto& r : rows) {
    if (r.name == name) return r;
  }
  throw std::out_of_range("no aggregate row '" + name + "'");
}

Json EvalReport::to_json() const {
  Json per = Json::array();
  for (const auto& p : problems) {
    per.push_back({{"problem_id", p.problem_id},
                   {"difficulty", p.difficulty ? Json(codecot::to_string(*p.difficulty)) : Json(nullptr)},
                   {"n", p.n},
                   {"c", p.c},
                   {"infra_failures", p.infra_failures},
                   {"pass_at_1", p.pass_at_1.value()},
                   {"pass_at_1_exact", p.pass_at_1.str()}});
  }
  Json agg = Json::object();
  for (const auto& r : rows) {
    agg[r.name] = {{"problems", r.problems},
                   {"pass_at_1", r.mean ? Json(r.mean->value()) : Json(nullptr)},
                   {"pass_at_1_exact", r.mean ? Json(r.mean->str()) : Json(nullptr)}};
  }
  return Json{{"header", header}, {"per_problem", per}, {"aggregates", agg}};
}

std::string EvalReport::text_table() const {
  std::vector<std::string> names{"overall", "easy", "medium", "hard"};
  if (row("untagged").problems) names.push_back("untagged");
  std::ostringstream head, body;
  for (const auto& name : names) {
    std::string title = name;
    title[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(title[0])));
    head << std::setw(10) << title;
    const auto& r = row(name);
    std::ostringstream cell;
    if (r.mean) {
      cell << std::fixed << std::setprecision(2) << r.mean->value() * 100.0;
    } else {
      cell << "-";
    }
    body << std::setw(10) << cell.str();
  }
  std::ostringstream title;
  title << "pass@1 (%)  n_samples=" << header.value("n_samples", Json()).dump()
        << " temperature=" << header.value("temperature", Json()).dump()
        << " backend=" << header.value("backend", std::string());
  return title.str() + "\n" + head.str() + "\n" + body.str() + "\n";
}

EvalReport build_report(const std::vector<CodeProblem>& problems, const std::vector<SampleRecord>& samples,
                        const EvalConfig& config, const std::string& backend_id) {
  EvalReport report;
  report.header = Json{{"n_samples", config.n_samples},
                       {"temperature", config.temperature},
                       {"estimator", kEstimator},
                       {"extraction", kExtractionRule},
                       {"verification", "direct test execution"},
                       {"backend", backend_id}};
  report.samples = samples;

  std::map<std::string, std::pair<std::size_t, std::size_t>> counts;  // id -> (n, c)
  std::map<std::string, std::size_t> infra;
  for (const auto& s : samples) {
    auto& [n, c] = counts[s.problem_id];
    ++n;
    if (s.passed) ++c;
    if (s.infra_failure) ++infra[s.problem_id];
  }

  std::map<std::string, std::vector<Fraction>> groups;
  for (const auto& p : problems) {
    const auto [n, c] = counts[p.id];
    ProblemResult r{p.id, p.difficulty, n, c, infra[p.id], pass_at_1_exact(c, n)};
    groups["overall"].push_back(r.pass_at_1);
    groups[p.difficulty ? to_string(*p.difficulty) : "untagged"].push_back(r.pass_at_1);
    report.problems.push_back(std::move(r));
  }
  for (const char* name : {"overall", "easy", "medium", "hard", "untagged"}) {
    AggregateRow row{name, groups[name].size(), std::nullopt};
    if (!groups[name].empty()) {
      Fraction sum;
      for (const auto& f : groups[name]) sum = sum + f;
      row.mean = sum / static_cast<std::int64_t>(groups[name].size());
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::vector<SampleRecord> evaluate_problem(const CodeProblem& problem, Backend& backend, Verifier& verifier,
                                           const EvalConfig& config, const PromptSet& prompts) {
  if (problem.test_cases.empty()) {
    throw ValidationError("eval_requires_tests", "problem " + problem.id + " has no executable tests");
  }
  CompletionRequest req;
  req.messages = {{Role::system, prompts.render("eval_solve")}, {Role::user, problem.statement}};
  req.temperature = config.temperature;
  req.max_tokens = config.max_tokens;
  req.n_samples = config.n_samples;
  req.seed = config.seed;

  std::vector<SampleRecord> out;
  std::optional<CompletionResponse> resp;
  std::string last_error;
  for (std::size_t attempt = 0; attempt <= config.infra_retry_limit && !resp; ++attempt) {
    try {
      resp = backend.complete(req);
    } catch (const BackendError& e) {
      last_error = e.what();
      spdlog::warn("eval {}: generation failed ({})", problem.id, last_error);
    }
  }

  for (std::size_t i = 0; i < config.n_samples; ++i) {
    SampleRecord s;
    s.problem_id = problem.id;
    s.sample_index = i;
    if (!resp || i >= resp->samples.size()) {
      s.infra_failure = true;
      s.status = VerdictStatus::crashed;
      s.detail = "generation failed: " + last_error;
      out.push_back(std::move(s));
      continue;
    }
    auto block = extract_last_code_block(resp->samples[i]);
    if (!block || block->code.empty()) {
      s.detail = "no code block";
      out.push_back(std::move(s));
      continue;
    }
    s.code = block->code;
    std::optional<Verdict> verdict;
    for (std::size_t attempt = 0; attempt <= config.infra_retry_limit && !verdict; ++attempt) {
      try {
        verdict = verifier.verify(problem, block->code);
      } catch (const SandboxUnavailable& e) {
        last_error = e.what();
      }
    }
    if (!verdict) {
      s.infra_failure = true;
      s.status = VerdictStatus::crashed;
      s.detail = "sandbox unavailable: " + last_error;
    } else {
      if (verdict->path == VerdictPath::generated_judged) {
        throw ValidationError("eval_direct_only", "evaluation verdicts must come from direct test execution");
      }
      s.status = verdict->status;
      s.passed = verdict->passed();
      s.detail = verdict->detail;
    }
    out.push_back(std::move(s));
  }
  return out;
}

EvalReport evaluate(const std::vector<CodeProblem>& problems, Backend& backend, Verifier& verifier,
                    const EvalConfig& config, const PromptSet& prompts) {
  config.validate();
  for (const auto& p : problems) {
    if (p.test_cases.empty()) {
      throw ValidationError("eval_requires_tests", "problem " + p.id + " has no executable tests");
    }
  }

  std::vector<std::vector<SampleRecord>> per(problems.size());
  if (config.workers <= 1) {
    for (std::size_t i = 0; i < problems.size(); ++i) {
      per[i] = evaluate_problem(problems[i], backend, verifier, config, prompts);
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::future<void>> pool;
    for (std::size_t w = 0; w < config.workers; ++w) {
      pool.push_back(std::async(std::launch::async, [&] {
        for (std::size_t i = next++; i < problems.size(); i = next++) {
          per[i] = evaluate_problem(problems[i], backend, verifier, config, prompts);
        }
      }));
    }
    for (auto& f : pool) f.get();
  }

  std::vector<SampleRecord> samples;
  for (auto& v : per) samples.insert(samples.end(), v.begin(), v.end());
  return build_report(problems, samples, config, backend.id());
}

}  // namespace codecot
