#include "codecot/config.hpp"

#include <cstdlib>
#include <fstream>
#include <random>
#include <regex>
#include <sstream>

#include "codecot/http_backend.hpp"
#include "codecot/json_io.hpp"
#include "codecot/mock_backend.hpp"

namespace codecot {

namespace {

std::string join_lines(const std::vector<std::string>& v) {
  std::string out = "invalid configuration:";
  for (const auto& s : v) out += "\n  - " + s;
  return out;
}

void interpolate_tree(Json& j, std::vector<std::string>& missing) {
  if (j.is_string()) {
    j = interpolate_env(j.get<std::string>(), missing);
  } else if (j.is_structured()) {
    for (auto& v : j) interpolate_tree(v, missing);
  }
}

BackendPolicy parse_policy(const Json& j) {
  BackendPolicy p;
  p.max_concurrency = j.value("max_concurrency", p.max_concurrency);
  p.retry_limit = j.value("retry_limit", p.retry_limit);
  if (auto it = j.find("retry_backoff_ms"); it != j.end()) {
    p.retry_backoff.clear();
    for (const auto& ms : *it) p.retry_backoff.emplace_back(ms.get<long long>());
  }
  p.request_timeout = std::chrono::milliseconds(j.value("request_timeout_ms", p.request_timeout.count()));
  p.validate();
  return p;
}

SamplingParams parse_sampling(const Json& j, SamplingParams d) {
  d.temperature = j.value("temperature", d.temperature);
  d.max_tokens = j.value("max_tokens", d.max_tokens);
  return d;
}

/// Runs `fn`, turning any exception into an entry of `errors`.
template <typename F>
void collect(std::vector<std::string>& errors, const std::string& where, F&& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    errors.push_back(where + ": " + e.what());
  }
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error(join_lines(problems)), problems_(std::move(problems)) {}

std::string interpolate_env(const std::string& text, std::vector<std::string>& missing) {
  static const std::regex kVar(R"(\$\{([A-Za-z_][A-Za-z0-9_]*)\})");
  std::string out;
  auto begin = std::sregex_iterator(text.begin(), text.end(), kVar);
  std::size_t last = 0;
  for (auto it = begin; it != std::sregex_iterator(); ++it) {
    out += text.substr(last, it->position() - last);
    const auto name = (*it)[1].str();
    if (const char* v = std::getenv(name.c_str())) {
      out += v;
    } else {
      missing.push_back(name);
    }
    last = it->position() + it->length();
  }
  return out + text.substr(last);
}

std::filesystem::path PipelineConfig::resolve(const std::filesystem::path& p) const {
  if (p.empty() || p.is_absolute() || base_dir.empty()) return p;
  return base_dir / p;
}

PipelineConfig PipelineConfig::from_json(const Json& input, const std::filesystem::path& base_dir) {
  std::vector<std::string> errors;
  PipelineConfig cfg;
  cfg.base_dir = base_dir;
  if (!input.is_object()) throw ConfigError({"config root must be a JSON object"});

  Json j = input;
  std::vector<std::string> missing;
  interpolate_tree(j, missing);
  for (const auto& m : missing) errors.push_back("environment variable '" + m + "' is not set");
  cfg.raw = j;

  static const std::set<std::string> kSections{"backends", "paths", "sandbox", "problems", "cot", "search", "eval"};
  for (const auto& [key, _] : j.items()) {
    if (!kSections.count(key)) errors.push_back("unknown top-level section '" + key + "'");
  }

  if (auto it = j.find("backends"); it != j.end()) {
    if (!it->is_object()) {
      errors.push_back("backends: must be an object keyed by backend id");
    } else {
      for (const auto& [id, spec] : it->items()) {
        collect(errors, "backends." + id, [&] {
          BackendSpec b;
          b.id = id;
          b.type = spec.at("type").get<std::string>();
          if (b.type == "openai") {
            b.base_url = spec.at("base_url").get<std::string>();
            b.path = spec.value("path", b.path);
            b.model = spec.at("model").get<std::string>();
            b.api_key_env = spec.value("api_key_env", std::string());
            b.supports_n = spec.value("supports_n", true);
            if (auto p = spec.find("policy"); p != spec.end()) b.policy = parse_policy(*p);
            if (!b.api_key_env.empty() && !std::getenv(b.api_key_env.c_str())) {
              throw ValidationError("api_key_env", "environment variable '" + b.api_key_env + "' is not set");
            }
          } else if (b.type == "mock") {
            if (spec.contains("script")) {
              b.script = cfg.resolve(spec.at("script").get<std::string>());
              if (!std::filesystem::is_regular_file(b.script)) {
                throw ValidationError("path_exists", "mock script " + b.script.string() + " not found");
              }
            }
          } else {
            throw ValidationError("backend_type", "unknown type '" + b.type + "' (expected openai or mock)");
          }
          cfg.backends[id] = std::move(b);
        });
      }
    }
  }

  if (auto it = j.find("paths"); it != j.end()) {
    collect(errors, "paths", [&] {
      cfg.data_dir = cfg.resolve(it->value("data_dir", std::string("data")));
      if (auto p = it->find("prompts"); p != it->end() && !p->is_null()) {
        cfg.prompts_dir = cfg.resolve(p->get<std::string>());
        if (!std::filesystem::is_directory(*cfg.prompts_dir)) {
          throw ValidationError("path_exists", "prompt directory " + cfg.prompts_dir->string() + " not found");
        }
      }
    });
  }

  if (auto it = j.find("sandbox"); it != j.end()) {
    collect(errors, "sandbox", [&] {
      cfg.sandbox.python = it->value("python", cfg.sandbox.python);
      cfg.sandbox.pool_size = it->value("pool_size", cfg.sandbox.pool_size);
      if (auto s = it->find("shim"); s != it->end() && !s->is_null()) {
        cfg.sandbox.shim_path = cfg.resolve(s->get<std::string>());
        if (!std::filesystem::is_regular_file(cfg.sandbox.shim_path)) {
          throw ValidationError("path_exists", "shim " + cfg.sandbox.shim_path.string() + " not found");
        }
      }
      if (auto l = it->find("limits"); l != it->end()) cfg.limits = l->get<SandboxLimits>();
      if (cfg.sandbox.pool_size == 0) throw ValidationError("pool_size", "must be >= 1");
    });
  }

  if (auto it = j.find("problems"); it != j.end()) {
    collect(errors, "problems", [&] {
      auto& p = cfg.problems;
      p.synthesis_backend = it->value("synthesis_backend", p.synthesis_backend);
      p.evolve_backend = it->value("evolve_backend", p.evolve_backend);
      p.filter_backend = it->value("filter_backend", p.filter_backend);
      p.synthesis_sampling = parse_sampling(*it, p.synthesis_sampling);
      p.ngram = it->value("ngram", p.ngram);
      if (p.ngram == 0) throw ValidationError("ngram", "must be >= 1");
    });
  }

  if (auto it = j.find("cot"); it != j.end()) {
    collect(errors, "cot", [&] {
      cfg.cot.workflow = it->get<WorkflowConfig>();
      cfg.cot.workflow.validate();
      cfg.cot.test_generator_backend = it->value("test_generator_backend", std::string());
      cfg.cot.result_checker_backend = it->value("result_checker_backend", std::string());
      cfg.cot.test_generation_retries = it->value("test_generation_retries", cfg.cot.test_generation_retries);
    });
  }

  if (auto it = j.find("search"); it != j.end()) {
    collect(errors, "search", [&] {
      cfg.search.search = it->get<SearchConfig>();
      cfg.search.policy_backend = it->value("policy_backend", cfg.search.policy_backend);
    });
  }

  if (auto it = j.find("eval"); it != j.end()) {
    collect(errors, "eval", [&] {
      cfg.eval.eval = it->get<EvalConfig>();
      cfg.eval.backend = it->value("backend", cfg.eval.backend);
    });
  }

  auto require_backend = [&](const std::string& where, const std::string& id) {
    if (!id.empty() && !cfg.backends.count(id)) {
      errors.push_back(where + ": unknown backend id '" + id + "'");
    }
  };
  require_backend("problems.synthesis_backend", cfg.problems.synthesis_backend);
  require_backend("problems.evolve_backend", cfg.problems.evolve_backend);
  require_backend("problems.filter_backend", cfg.problems.filter_backend);
  require_backend("cot.thinking_backend", cfg.cot.workflow.thinking_backend);
  require_backend("cot.reflection_backend", cfg.cot.workflow.reflection_backend);
  require_backend("cot.test_generator_backend", cfg.cot.test_generator_backend);
  require_backend("cot.result_checker_backend", cfg.cot.result_checker_backend);
  require_backend("search.policy_backend", cfg.search.policy_backend);
  require_backend("eval.backend", cfg.eval.backend);

  if (!errors.empty()) throw ConfigError(std::move(errors));
  return cfg;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& file) {
  Json j;
  try {
    j = Json::parse(read_text_file(file));
  } catch (const Json::parse_error& e) {
    throw ConfigError({file.string() + ": " + e.what()});
  }
  return from_json(j, std::filesystem::absolute(file).parent_path());
}

BackendRegistry PipelineConfig::make_backends() const {
  BackendRegistry reg;
  for (const auto& [id, spec] : backends) {
    if (spec.type == "mock") {
      auto mock = std::make_shared<MockBackend>(id);
      if (!spec.script.empty()) mock->load_fixture(spec.script);
      reg.add(id, mock);
    } else {
      HttpBackendConfig hc;
      hc.id = id;
      hc.base_url = spec.base_url;
      hc.path = spec.path;
      hc.model = spec.model;
      hc.policy = spec.policy;
      hc.supports_n = spec.supports_n;
      if (!spec.api_key_env.empty()) {
        if (const char* key = std::getenv(spec.api_key_env.c_str())) hc.api_key = key;
      }
      reg.add(id, std::make_shared<HttpBackend>(hc));
    }
  }
  return reg;
}

PromptSet PipelineConfig::make_prompts() const {
  return prompts_dir ? PromptSet::from_directory(*prompts_dir) : PromptSet::builtin();
}

bool RunCheckpoint::contains(const std::string& id) const {
  return std::find(completed.begin(), completed.end(), id) != completed.end();
}

Json RunCheckpoint::to_json() const {
  return Json{{"run_id", run_id}, {"stage", stage}, {"config_hash", config_hash}, {"completed", completed}};
}

RunCheckpoint RunCheckpoint::from_json(const Json& j) {
  RunCheckpoint c;
  c.run_id = j.at("run_id").get<std::string>();
  c.stage = j.at("stage").get<std::string>();
  c.config_hash = j.at("config_hash").get<std::string>();
  c.completed = j.at("completed").get<std::vector<std::string>>();
  return c;
}

void RunCheckpoint::save(const std::filesystem::path& file) const {
  auto tmp = file;
  tmp += ".tmp";
  write_text_file(tmp, to_json().dump(2) + "\n");
  std::filesystem::rename(tmp, file);
}

std::optional<RunCheckpoint> RunCheckpoint::load(const std::filesystem::path& file) {
  if (!std::filesystem::exists(file)) return std::nullopt;
  try {
    return from_json(Json::parse(read_text_file(file)));
  } catch (const std::exception& e) {
    throw IoError("unreadable checkpoint " + file.string() + ": " + e.what());
  }
}

std::string stage_config_hash(const std::string& stage, const Json& inputs) {
  return sha256_hex(Json{{"stage", stage}, {"inputs", inputs}}.dump());
}

}  // namespace codecot
