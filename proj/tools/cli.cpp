#include "cli.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <csignal>
#include <ctime>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <thread>

#include "codecot/config.hpp"
#include "codecot/cot_format.hpp"
#include "codecot/eval.hpp"
#include "codecot/execution_agent.hpp"
#include "codecot/export.hpp"
#include "codecot/json_io.hpp"
#include "codecot/ngram.hpp"
#include "codecot/problems.hpp"
#include "codecot/sandbox.hpp"
#include "codecot/tree.hpp"
#include "codecot/workflow.hpp"

namespace fs = std::filesystem;

namespace codecot::cli {

namespace {

volatile std::sig_atomic_t g_stop = 0;

bool stop_requested() { return g_stop != 0; }

struct Globals {
  std::string config_file;
  std::optional<std::int64_t> seed;
  bool resume = false;
  bool force = false;
  std::string log_format = "text";
  std::size_t max_items = 0;  // 0: no limit
  std::size_t workers = 1;
  bool verbose = false;
};

class JsonLogFormatter : public spdlog::formatter {
 public:
  void format(const spdlog::details::log_msg& msg, spdlog::memory_buf_t& dest) override {
    const auto t = std::chrono::system_clock::to_time_t(msg.time);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char ts[32];
    std::strftime(ts, sizeof ts, "%Y-%m-%dT%H:%M:%SZ", &tm);
    const auto level = spdlog::level::to_string_view(msg.level);
    const auto line = Json{{"ts", ts},
                           {"level", std::string(level.data(), level.size())},
                           {"msg", std::string(msg.payload.data(), msg.payload.size())}}
                          .dump(-1, ' ', false, Json::error_handler_t::replace) +
                      "\n";
    dest.append(line.data(), line.data() + line.size());
  }
  std::unique_ptr<spdlog::formatter> clone() const override { return std::make_unique<JsonLogFormatter>(); }
};

void setup_logging(const Globals& g, std::ostream& err) {
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err, true);
  auto logger = std::make_shared<spdlog::logger>("codecot", sink);
  if (g.log_format == "json") {
    logger->set_formatter(std::make_unique<JsonLogFormatter>());
  } else {
    logger->set_pattern("[%H:%M:%S] [%l] %v");
  }
  logger->set_level(g.verbose ? spdlog::level::debug : spdlog::level::info);
  spdlog::set_default_logger(logger);
}

PipelineConfig load_config(const Globals& g) {
  if (g.config_file.empty()) return PipelineConfig{};
  return PipelineConfig::load(g.config_file);
}

BackendPtr need_backend(const BackendRegistry& reg, const std::string& id, const char* role) {
  if (!reg.contains(id)) {
    throw ConfigError({std::string(role) + " backend '" + id + "' is not configured (pass --config)"});
  }
  return reg.get(id);
}

std::shared_ptr<ExecutionAgent> make_verifier(const PipelineConfig& cfg, const BackendRegistry& reg,
                                              const PromptSet& prompts) {
  auto sandbox = std::make_shared<const SandboxExecutor>(cfg.sandbox);
  ExecutionConfig ec;
  ec.limits = cfg.limits;
  ec.test_generation_retries = cfg.cot.test_generation_retries;
  BackendPtr gen = cfg.cot.test_generator_backend.empty() ? nullptr : reg.get(cfg.cot.test_generator_backend);
  BackendPtr chk = cfg.cot.result_checker_backend.empty() ? nullptr : reg.get(cfg.cot.result_checker_backend);
  return std::make_shared<ExecutionAgent>(std::move(sandbox), gen, chk, prompts, ec);
}

std::string file_digest(const fs::path& p) { return fs::exists(p) ? sha256_file(p) : std::string(); }

fs::path with_suffix(const fs::path& p, const std::string& suffix) {
  auto out = p;
  out += suffix;
  return out;
}

std::string safe_file_stem(const std::string& id) {
  std::string s = id;
  for (auto& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
  }
  return s.empty() ? "_" : s;
}

std::string new_run_id() {
  std::random_device rd;
  return sha256_hex(std::to_string(rd()) + std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()))
      .substr(0, 12);
}

// ---------------------------------------------------------------------------
// Checkpointed per-item stage runner

struct OutputStream {
  fs::path file;
  std::function<std::string(const Json&)> key;  // item id a record belongs to
};

struct ItemResult {
  std::vector<std::pair<std::size_t, Json>> lines;  // (output index, record)
  std::vector<std::pair<fs::path, std::string>> files;
};

struct Stage {
  std::string name;
  fs::path checkpoint_file;
  Json hash_inputs;
  std::vector<OutputStream> outputs;
};

struct StageSummary {
  std::size_t processed = 0;
  std::size_t skipped = 0;
  std::size_t failed = 0;
  std::size_t remaining = 0;
  bool interrupted = false;
  std::string run_id;

  Json to_json(const std::string& stage) const {
    return Json{{"stage", stage},         {"processed", processed}, {"skipped", skipped},
                {"failed", failed},       {"remaining", remaining}, {"interrupted", interrupted},
                {"run_id", run_id}};
  }
};

void append_line(const fs::path& file, const Json& record) {
  std::ofstream f(file, std::ios::app | std::ios::binary);
  f << to_jsonl_line(record);
  if (!f) throw IoError("cannot append to " + file.string());
}

/// Keeps only records whose item id is marked complete.
void truncate_to_checkpoint(const OutputStream& o, const RunCheckpoint& ck) {
  if (!fs::exists(o.file)) {
    write_text_file(o.file, "");
    return;
  }
  std::string kept;
  std::size_t dropped = 0;
  for (auto& line : read_jsonl(o.file)) {
    if (line.value && ck.contains(o.key(*line.value))) {
      kept += to_jsonl_line(*line.value);
    } else {
      ++dropped;
    }
  }
  if (dropped) spdlog::info("resume: dropped {} partial record(s) from {}", dropped, o.file.string());
  write_text_file(o.file, kept);
}

StageSummary run_stage(const Stage& stage, const Globals& g, const std::vector<std::string>& ids,
                       const std::function<ItemResult(std::size_t)>& work) {
  const auto hash = stage_config_hash(stage.name, stage.hash_inputs);
  RunCheckpoint ck;
  bool fresh = true;
  if (g.resume) {
    if (auto prior = RunCheckpoint::load(stage.checkpoint_file)) {
      if (prior->stage != stage.name || prior->config_hash != hash) {
        if (!g.force) {
          throw CheckpointMismatch("checkpoint " + stage.checkpoint_file.string() +
                                   " was written with a different configuration or input; "
                                   "pass --force to discard it and start over");
        }
        spdlog::warn("checkpoint configuration differs; --force given, starting over");
      } else {
        ck = *prior;
        fresh = false;
      }
    } else {
      spdlog::info("no checkpoint at {}; starting a new run", stage.checkpoint_file.string());
    }
  }
  if (fresh) {
    ck = RunCheckpoint{new_run_id(), stage.name, hash, {}};
    for (const auto& o : stage.outputs) write_text_file(o.file, "");
  } else {
    for (const auto& o : stage.outputs) truncate_to_checkpoint(o, ck);
  }
  ck.save(stage.checkpoint_file);

  StageSummary summary;
  summary.run_id = ck.run_id;
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ck.contains(ids[i])) {
      ++summary.skipped;
    } else {
      pending.push_back(i);
    }
  }
  spdlog::info("{}: run {} with {} item(s) pending, {} already done", stage.name, ck.run_id, pending.size(),
               summary.skipped);

  std::mutex mu;
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> claimed{0};
  auto worker = [&] {
    while (!stop_requested()) {
      if (g.max_items && claimed.fetch_add(1) >= g.max_items) return;
      const auto slot = next++;
      if (slot >= pending.size()) return;
      const auto index = pending[slot];
      const auto& id = ids[index];
      try {
        auto result = work(index);
        std::lock_guard lock(mu);
        for (const auto& [file, content] : result.files) {
          auto tmp = with_suffix(file, ".tmp");
          write_text_file(tmp, content);
          fs::rename(tmp, file);
        }
        for (const auto& [o, record] : result.lines) append_line(stage.outputs.at(o).file, record);
        ck.completed.push_back(id);
        ck.save(stage.checkpoint_file);
        ++summary.processed;
      } catch (const std::exception& e) {
        std::lock_guard lock(mu);
        ++summary.failed;
        spdlog::error("{}: item {} failed: {}", stage.name, id, e.what());
      }
    }
  };
  const auto n_workers = std::max<std::size_t>(1, std::min(g.workers, pending.size()));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  summary.interrupted = stop_requested();
  summary.remaining = ids.size() - ck.completed.size();
  if (summary.interrupted) spdlog::warn("{}: interrupted; rerun with --resume to continue", stage.name);
  return summary;
}

int finish(std::ostream& out, const std::string& stage, const StageSummary& s) {
  out << s.to_json(stage).dump() << "\n";
  if (s.interrupted) return kInterrupted;
  return s.failed ? kItemFailures : kOk;
}

std::vector<CodeProblem> load_problems(const fs::path& p) { return load_jsonl<CodeProblem>(p); }

std::vector<std::string> ids_of(const std::vector<CodeProblem>& problems) {
  std::vector<std::string> ids;
  std::set<std::string> seen;
  for (const auto& p : problems) {
    if (!seen.insert(p.id).second) throw ValidationError("unique_ids", "duplicate problem id '" + p.id + "'");
    ids.push_back(p.id);
  }
  return ids;
}

std::string id_key(const Json& j) { return j.value("id", std::string()); }
std::string problem_id_key(const Json& j) { return j.value("problem_id", std::string()); }

// ---------------------------------------------------------------------------
// Commands

struct Paths {
  std::string in, out, holdout, seeds, problems, traces, pairs, code, problem, backend, report;
  std::vector<std::string> trees;
  std::size_t ngram = 0;
  std::optional<double> gap;
  bool reverify = false;
};

int cmd_ingest(const Paths& p, std::ostream& out) {
  auto report = ingest_problems(p.in);
  for (const auto& e : report.errors) spdlog::warn("{}:{}: {}", p.in, e.line_number, e.message);
  for (const auto& w : report.warnings) spdlog::warn("{}", w);
  save_jsonl(p.out, report.problems);
  out << Json{{"stage", "problems.ingest"},
              {"processed", report.problems.size()},
              {"skipped", report.errors.size()},
              {"errors", report.errors}}
             .dump()
      << "\n";
  return kOk;
}

int cmd_synth(const Globals& g, const Paths& p, std::ostream& out) {
  auto cfg = load_config(g);
  auto reg = cfg.make_backends();
  auto prompts = cfg.make_prompts();
  auto backend = need_backend(reg, cfg.problems.synthesis_backend, "synthesis");
  const auto seeds = dedup_snippets(load_jsonl<SeedSnippet>(p.seeds));
  std::vector<std::string> ids;
  for (const auto& s : seeds) ids.push_back(s.file_name);

  Stage stage{"problems.synth",
              with_suffix(p.out, ".checkpoint.json"),
              Json{{"seeds", file_digest(p.seeds)},
                   {"backend", cfg.problems.synthesis_backend},
                   {"temperature", cfg.problems.synthesis_sampling.temperature},
                   {"max_tokens", cfg.problems.synthesis_sampling.max_tokens}},
              {{p.out, [](const Json& j) { return j.at("provenance").value("seed_file", std::string()); }},
               {with_suffix(p.out, ".failures.jsonl"),
                [](const Json& j) { return j.value("seed_file", std::string()); }}}};
  auto summary = run_stage(stage, g, ids, [&](std::size_t i) {
    auto outcome = synthesize_problem(seeds[i], *backend, prompts, cfg.problems.synthesis_sampling);
    ItemResult r;
    if (auto* prob = std::get_if<CodeProblem>(&outcome)) {
      r.lines.emplace_back(0, Json(*prob));
    } else {
      r.lines.emplace_back(1, Json(std::get<SynthesisFailure>(outcome)));
    }
    return r;
  });
  return finish(out, stage.name, summary);
}

int cmd_evolve(const Globals& g, const Paths& p, std::ostream& out) {
  auto cfg = load_config(g);
  auto reg = cfg.make_backends();
  auto prompts = cfg.make_prompts();
  auto backend = need_backend(reg, cfg.problems.evolve_backend, "evolve");
  const auto problems = load_problems(p.in);
  Stage stage{"problems.evolve",
              with_suffix(p.out, ".checkpoint.json"),
              Json{{"input", file_digest(p.in)}, {"backend", cfg.problems.evolve_backend}},
              {{p.out, id_key}}};
  auto summary = run_stage(stage, g, ids_of(problems), [&](std::size_t i) {
    auto res = evolve_instruction(problems[i], *backend, prompts);
    return ItemResult{{{0, Json(res.problem)}}, {}};
  });
  return finish(out, stage.name, summary);
}

int cmd_filter(const Globals& g, const Paths& p, std::ostream& out) {
  auto cfg = load_config(g);
  auto reg = cfg.make_backends();
  auto prompts = cfg.make_prompts();
  auto backend = need_backend(reg, cfg.problems.filter_backend, "filter");
  const auto problems = load_problems(p.in);
  Stage stage{"problems.filter",
              with_suffix(p.out, ".checkpoint.json"),
              Json{{"input", file_digest(p.in)}, {"backend", cfg.problems.filter_backend}},
              {{p.out, id_key}, {with_suffix(p.out, ".rejected.jsonl"), id_key}}};
  auto summary = run_stage(stage, g, ids_of(problems), [&](std::size_t i) {
    auto decision = filter_problem(problems[i], *backend, prompts);
    auto prob = problems[i];
    prob.provenance["filter"] = decision;
    return ItemResult{{{decision.accepted ? 0u : 1u, Json(prob)}}, {}};
  });
  return finish(out, stage.name, summary);
}

int cmd_decontaminate(const Globals& g, const Paths& p, std::ostream& out) {
  auto cfg = load_config(g);
  const auto n = p.ngram ? p.ngram : cfg.problems.ngram;
  const auto problems = load_problems(p.in);
  const auto holdout = load_jsonl<HoldoutText>(p.holdout);
  auto result = decontaminate(problems, holdout, n);
  save_jsonl(p.out, result.kept);
  save_jsonl(with_suffix(p.out, ".removed.jsonl"), result.removed);
  out << Json{{"stage", "problems.decontaminate"},
              {"processed", problems.size()},
              {"kept", result.kept.size()},
              {"removed", result.removed.size()},
              {"ngram", n}}
             .dump()
      << "\n";
  return kOk;
}

int cmd_cot_make(const Globals& g, const Paths& p, std::ostream& out) {
  auto cfg = load_config(g);
  auto reg = cfg.make_backends();
  auto prompts = cfg.make_prompts();
  auto wf = cfg.cot.workflow;
  if (g.seed) wf.seed = g.seed;
  auto thinking = need_backend(reg, wf.thinking_backend, "thinking");
  auto reflection = need_backend(reg, wf.reflection_backend, "reflection");
  auto verifier = make_verifier(cfg, reg, prompts);
  const auto problems = load_problems(p.problems);
  Stage stage{"cot.make",
              with_suffix(p.out, ".checkpoint.json"),
              Json{{"input", file_digest(p.problems)},
                   {"workflow", wf},
                   {"limits", cfg.limits},
                   {"test_generator", cfg.cot.test_generator_backend},
                   {"result_checker", cfg.cot.result_checker_backend}},
              {{p.out, problem_id_key}, {with_suffix(p.out, ".failures.jsonl"), problem_id_key}}};
  auto summary = run_stage(stage, g, ids_of(problems), [&](std::size_t i) {
    // one maker per item keeps workers independent
    CotMaker maker(wf, thinking, reflection, *verifier, prompts);
    auto outcome = maker.make_trace(problems[i]);
    ItemResult r;
    if (outcome.trace) {
      r.lines.emplace_back(0, Json(*outcome.trace));
    } else {
      r.lines.emplace_back(1, Json(*outcome.failure));
    }
    return r;
  });
  return finish(out, stage.name, summary);
}

SearchConfig search_config(const PipelineConfig& cfg, const Globals& g) {
  auto sc = cfg.search.search;
  if (g.seed) sc.seed = g.seed;
  sc.validate();
  return sc;
}

int cmd_tree_search(const Globals& g, const Paths& p, std::ostream& out) {
  auto cfg = load_config(g);
  auto reg = cfg.make_backends();
  auto prompts = cfg.make_prompts();
  auto policy = need_backend(reg, cfg.search.policy_backend, "policy");
  auto verifier = make_verifier(cfg, reg, prompts);
  const auto sc = search_config(cfg, g);
  const auto problems = load_problems(p.problems);
  const fs::path dir = p.out;
  fs::create_directories(dir);
  Stage stage{"tree.search",
              dir / "search.checkpoint.json",
              Json{{"input", file_digest(p.problems)}, {"search", sc}, {"policy", cfg.search.policy_backend}},
              {}};
  const Json manifest_extra{{"config", sc}, {"policy_backend", cfg.search.policy_backend}};
  auto summary = run_stage(stage, g, ids_of(problems), [&](std::size_t i) {
    ItemResult r;
    try {
      auto tree = search(problems[i], *policy, *verifier, sc, prompts);
      r.files.emplace_back(dir / (safe_file_stem(problems[i].id) + ".tree.jsonl"), tree.to_jsonl(manifest_extra));
    } catch (const TreeSearchAborted& e) {
      write_text_file(dir / (safe_file_stem(problems[i].id) + ".partial.tree.jsonl"),
                      e.tree().to_jsonl(manifest_extra));
      throw;
    }
    return r;
  });
  return finish(out, stage.name, summary);
}

std::vector<fs::path> tree_files(const std::vector<std::string>& inputs) {
  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(in)) {
        const auto name = e.path().filename().string();
        if (name.size() > 11 && name.ends_with(".tree.jsonl") && !name.ends_with(".partial.tree.jsonl")) {
          found.push_back(e.path());
        }
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      files.emplace_back(in);
    }
  }
  return files;
}

int cmd_tree_pairs(const Globals& g, const Paths& p, std::ostream& out) {
  const auto fallback = g.config_file.empty() ? SearchConfig{} : search_config(load_config(g), g);
  std::vector<PreferencePair> pairs;
  std::size_t trees = 0;
  for (const auto& file : tree_files(p.trees)) {
    auto tree = ReasoningTree::from_jsonl(read_text_file(file));
    auto sc = tree.manifest.contains("config") ? tree.manifest.at("config").get<SearchConfig>() : fallback;
    if (p.gap) sc.pair_accuracy_gap = *p.gap;
    auto found = extract_pairs(tree, sc);
    pairs.insert(pairs.end(), found.begin(), found.end());
    ++trees;
  }
  save_jsonl(p.out, pairs);
  out << Json{{"stage", "tree.pairs"}, {"processed", trees}, {"pairs", pairs.size()}}.dump() << "\n";
  return kOk;
}

int cmd_export_sft(const Globals& g, const Paths& p, std::ostream& out) {
  auto cfg = load_config(g);
  const auto traces = load_jsonl<CotTrace>(p.traces);
  const auto problems = load_problems(p.problems);
  std::shared_ptr<ExecutionAgent> verifier;
  if (p.reverify) {
    auto reg = cfg.make_backends();
    verifier = make_verifier(cfg, reg, cfg.make_prompts());
  }
  auto res = export_sft(traces, problems, p.out, verifier.get(), cfg.raw);
  for (const auto& e : res.excluded) spdlog::warn("excluded {}", e.dump());
  out << Json{{"stage", "export.sft"},
              {"processed", res.records},
              {"skipped", res.excluded.size()},
              {"sha256", res.sha256},
              {"manifest", res.manifest_file.string()}}
             .dump()
      << "\n";
  return kOk;
}

int cmd_export_dpo(const Globals& g, const Paths& p, std::ostream& out) {
  auto cfg = load_config(g);
  const auto pairs = load_jsonl<PreferencePair>(p.pairs);
  auto res = export_step_dpo(pairs, p.out, cfg.raw);
  out << Json{{"stage", "export.dpo"},
              {"processed", res.records},
              {"skipped", 0},
              {"sha256", res.sha256},
              {"manifest", res.manifest_file.string()}}
             .dump()
      << "\n";
  return kOk;
}

int cmd_eval(const Globals& g, const Paths& p, std::ostream& out) {
  auto cfg = load_config(g);
  auto reg = cfg.make_backends();
  auto prompts = cfg.make_prompts();
  const auto backend_id = p.backend.empty() ? cfg.eval.backend : p.backend;
  auto backend = need_backend(reg, backend_id, "eval");
  auto ec = cfg.eval.eval;
  if (g.seed) ec.seed = g.seed;
  ec.validate();
  auto verifier = make_verifier(cfg, reg, prompts);
  const auto problems = load_problems(p.problems);
  for (const auto& prob : problems) {
    if (prob.test_cases.empty()) {
      throw ValidationError("eval_requires_tests", "problem " + prob.id + " has no executable tests");
    }
  }
  const fs::path report_file = p.out;
  const auto samples_file = with_suffix(report_file, ".samples.jsonl");
  Stage stage{"eval.run",
              with_suffix(report_file, ".checkpoint.json"),
              Json{{"input", file_digest(p.problems)}, {"eval", ec}, {"backend", backend_id}, {"limits", cfg.limits}},
              {{samples_file, problem_id_key}}};
  auto summary = run_stage(stage, g, ids_of(problems), [&](std::size_t i) {
    ItemResult r;
    for (auto& s : evaluate_problem(problems[i], *backend, *verifier, ec, prompts)) r.lines.emplace_back(0, Json(s));
    return r;
  });
  if (summary.remaining == 0) {
    auto report = build_report(problems, load_jsonl<SampleRecord>(samples_file), ec, backend_id);
    write_text_file(report_file, report.to_json().dump(2) + "\n");
    write_text_file(with_suffix(report_file, ".txt"), report.text_table());
    out << report.text_table();
  }
  return finish(out, stage.name, summary);
}

CodeProblem read_single_problem(const fs::path& file) {
  const auto text = read_text_file(file);
  try {
    return Json::parse(text).get<CodeProblem>();
  } catch (const Json::parse_error&) {
    auto lines = read_jsonl_text(text);
    if (lines.empty() || !lines.front().value) throw IoError("no problem in " + file.string());
    return lines.front().value->get<CodeProblem>();
  }
}

int cmd_verify(const Globals& g, const Paths& p, std::ostream& out) {
  auto cfg = load_config(g);
  auto reg = cfg.make_backends();
  auto prompts = cfg.make_prompts();
  auto verifier = make_verifier(cfg, reg, prompts);
  const auto problem = read_single_problem(p.problem);
  auto code = read_text_file(p.code);
  if (auto block = extract_last_code_block(code)) code = block->code;
  const auto verdict = verifier->verify(problem, code);
  out << Json(verdict).dump() << "\n";
  return verdict.passed() ? kOk : kNotPassed;
}

}  // namespace

void request_stop() noexcept { g_stop = 1; }
void reset_stop() noexcept { g_stop = 0; }

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"codecot: code reasoning data pipeline"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "codecot 0.1.0");

  Globals g;
  app.add_option("--config", g.config_file, "Pipeline config (JSON)")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Seed for randomized stages");
  app.add_flag("--resume", g.resume, "Continue from the stage checkpoint");
  app.add_flag("--force", g.force, "Discard a checkpoint written under a different configuration");
  app.add_option("--log-format", g.log_format, "Log format")->check(CLI::IsMember({"text", "json"}));
  app.add_option("--max-items", g.max_items, "Stop after this many items (0: all)");
  app.add_option("--workers", g.workers, "Items processed concurrently")->check(CLI::Range(1, 256));
  app.add_flag("-v,--verbose", g.verbose, "Debug logging");

  Paths p;
  std::function<int()> action;

  auto* problems = app.add_subcommand("problems", "Problem collection and synthesis")->require_subcommand(1);
  auto* ingest = problems->add_subcommand("ingest", "Validate and normalize collected problems");
  ingest->add_option("--in", p.in)->required()->check(CLI::ExistingFile);
  ingest->add_option("--out", p.out)->required();
  ingest->callback([&] { action = [&] { return cmd_ingest(p, out); }; });

  auto* synth = problems->add_subcommand("synth", "Draft problems from seed snippets");
  synth->add_option("--seeds", p.seeds)->required()->check(CLI::ExistingFile);
  synth->add_option("--out", p.out)->required();
  synth->callback([&] { action = [&] { return cmd_synth(g, p, out); }; });

  auto* evolve = problems->add_subcommand("evolve", "Rewrite problem statements");
  evolve->add_option("--in", p.in)->required()->check(CLI::ExistingFile);
  evolve->add_option("--out", p.out)->required();
  evolve->callback([&] { action = [&] { return cmd_evolve(g, p, out); }; });

  auto* filter = problems->add_subcommand("filter", "Keep clear, challenging, self-contained problems");
  filter->add_option("--in", p.in)->required()->check(CLI::ExistingFile);
  filter->add_option("--out", p.out)->required();
  filter->callback([&] { action = [&] { return cmd_filter(g, p, out); }; });

  auto* decon = problems->add_subcommand("decontaminate", "Drop problems overlapping a holdout set");
  decon->add_option("--in", p.in)->required()->check(CLI::ExistingFile);
  decon->add_option("--holdout", p.holdout)->required()->check(CLI::ExistingFile);
  decon->add_option("--out", p.out)->required();
  decon->add_option("--ngram", p.ngram, "n-gram length (default from config, else 10)");
  decon->callback([&] { action = [&] { return cmd_decontaminate(g, p, out); }; });

  auto* cot = app.add_subcommand("cot", "Chain-of-thought traces")->require_subcommand(1);
  auto* make = cot->add_subcommand("make", "Run the multi-agent workflow over problems");
  make->add_option("--problems", p.problems)->required()->check(CLI::ExistingFile);
  make->add_option("--out", p.out)->required();
  make->callback([&] { action = [&] { return cmd_cot_make(g, p, out); }; });

  auto* tree = app.add_subcommand("tree", "Reasoning tree search")->require_subcommand(1);
  auto* tsearch = tree->add_subcommand("search", "Build one reasoning tree per problem");
  tsearch->add_option("--problems", p.problems)->required()->check(CLI::ExistingFile);
  tsearch->add_option("--out", p.out, "Output directory")->required();
  tsearch->callback([&] { action = [&] { return cmd_tree_search(g, p, out); }; });

  auto* tpairs = tree->add_subcommand("pairs", "Mine step preference pairs from trees");
  tpairs->add_option("--trees", p.trees, "Tree files or directories")->required()->check(CLI::ExistingPath);
  tpairs->add_option("--out", p.out)->required();
  tpairs->add_option("--gap", p.gap, "Override the accuracy gap threshold")->check(CLI::Range(0.0, 1.0));
  tpairs->callback([&] { action = [&] { return cmd_tree_pairs(g, p, out); }; });

  auto* exp = app.add_subcommand("export", "Training datasets")->require_subcommand(1);
  auto* sft = exp->add_subcommand("sft", "Instruction/response records from traces");
  sft->add_option("--traces", p.traces)->required()->check(CLI::ExistingFile);
  sft->add_option("--problems", p.problems)->required()->check(CLI::ExistingFile);
  sft->add_option("--out", p.out)->required();
  sft->add_flag("--reverify", p.reverify, "Execute every trace's code again before export");
  sft->callback([&] { action = [&] { return cmd_export_sft(g, p, out); }; });

  auto* dpo = exp->add_subcommand("dpo", "Step preference records from pairs");
  dpo->add_option("--pairs", p.pairs)->required()->check(CLI::ExistingFile);
  dpo->add_option("--out", p.out)->required();
  dpo->callback([&] { action = [&] { return cmd_export_dpo(g, p, out); }; });

  auto* eval = app.add_subcommand("eval", "pass@1 evaluation")->require_subcommand(1);
  auto* erun = eval->add_subcommand("run", "Sample, execute and report");
  erun->add_option("--problems", p.problems)->required()->check(CLI::ExistingFile);
  erun->add_option("--out", p.out, "Report JSON path")->required();
  erun->add_option("--backend", p.backend, "Backend id (default from config)");
  erun->callback([&] { action = [&] { return cmd_eval(g, p, out); }; });

  auto* verify = app.add_subcommand("verify", "Run one solution against one problem");
  verify->add_option("--problem", p.problem, "Problem JSON")->required()->check(CLI::ExistingFile);
  verify->add_option("--code", p.code, "Solution file")->required()->check(CLI::ExistingFile);
  verify->callback([&] { action = [&] { return cmd_verify(g, p, out); }; });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  setup_logging(g, err);
  try {
    return action ? action() : kUsage;
  } catch (const ConfigError& e) {
    err << e.what() << "\n";
    return kUsage;
  } catch (const CheckpointMismatch& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const SandboxUnavailable& e) {
    err << "error: sandbox unavailable: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
}

}  // namespace codecot::cli
