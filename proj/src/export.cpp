#include "codecot/export.hpp"

#include <spdlog/spdlog.h>

#include "codecot/cot_format.hpp"
#include "codecot/json_io.hpp"
#include "codecot/ngram.hpp"

namespace codecot {

namespace {

constexpr int kManifestVersion = 1;

Json write_dataset(const std::filesystem::path& out, const std::string& kind, const std::string& body,
                   std::size_t records, const std::vector<Json>& excluded, const Json& config_echo,
                   ExportResult& result) {
  write_text_file(out, body);
  result.data_file = out;
  result.records = records;
  result.sha256 = sha256_hex(body);
  result.excluded = excluded;
  result.manifest = Json{{"manifest_version", kManifestVersion},
                         {"dataset",
                          {{"kind", kind},
                           {"file", out.filename().string()},
                           {"records", records},
                           {"sha256", result.sha256},
                           {"excluded", excluded}}},
                         {"training", training_constants()},
                         {"pipeline_config", config_echo},
                         {"token_budget", {{"limit", TokenBudget{}.limit}, {"rule", to_string(TokenBudget{}.counter)}}},
                         {"ngram_normalization", std::string(kNormalizationRule)}};
  result.manifest_file = manifest_path_for(out);
  write_text_file(result.manifest_file, result.manifest.dump(2) + "\n");
  return result.manifest;
}

}  // namespace

void to_json(Json& j, const SftRecord& r) { j = Json{{"instruction", r.instruction}, {"response", r.response}}; }

void from_json(const Json& j, SftRecord& r) {
  r.instruction = j.at("instruction").get<std::string>();
  r.response = j.at("response").get<std::string>();
  parse_cot(r.response);
}

void to_json(Json& j, const StepDpoRecord& r) {
  j = Json{{"instruction", r.instruction},
           {"chosen", r.chosen},
           {"rejected", r.rejected},
           {"scores", {{"chosen", r.chosen_score}, {"rejected", r.rejected_score}}}};
}

void from_json(const Json& j, StepDpoRecord& r) {
  r.instruction = j.at("instruction").get<std::string>();
  r.chosen = j.at("chosen").get<std::string>();
  r.rejected = j.at("rejected").get<std::string>();
  r.chosen_score = j.at("scores").at("chosen").get<double>();
  r.rejected_score = j.at("scores").at("rejected").get<double>();
}

SftRecord make_sft_record(const CodeProblem& problem, const CotTrace& trace) {
  return {problem.statement, serialize_cot(trace)};
}

StepDpoRecord make_step_dpo_record(const PreferencePair& pair) {
  if (pair.chosen_step == pair.rejected_step) {
    throw ValidationError("chosen_differs_from_rejected", "pair for " + pair.problem_id + " has identical steps");
  }
  if (!(pair.chosen_score > pair.rejected_score)) {
    throw ValidationError("chosen_score_gt_rejected", "pair for " + pair.problem_id + " (parent " +
                                                          std::to_string(pair.parent_id) + ") scores " +
                                                          std::to_string(pair.chosen_score) +
                                                          " <= " + std::to_string(pair.rejected_score));
  }
  return {pair.prefix, pair.chosen_step, pair.rejected_step, pair.chosen_score, pair.rejected_score};
}

Json training_constants() {
  return Json{
      {"sft",
       {{"epochs", 3},
        {"learning_rate", 5e-6},
        {"global_batch_size", 256},
        {"optimizer", "AdamW"},
        {"lr_scheduler", "cosine"},
        {"weight_decay", 0.1},
        {"adam_beta1", 0.9},
        {"adam_beta2", 0.95},
        {"warmup_steps", 30}}},
      {"step_dpo",
       {{"epochs", 3},
        {"learning_rate", 5e-6},
        {"global_batch_size", 256},
        {"optimizer", "AdamW"},
        {"lr_scheduler", "cosine"},
        {"beta", 0.1},
        {"nll_loss_coefficient", 0.2},
        {"warmup_ratio", 0.2},
        {"objective",
         "-log sigmoid(beta * (log pi(chosen|prefix) - log pi_ref(chosen|prefix) - log pi(rejected|prefix) + "
         "log pi_ref(rejected|prefix))) + nll_loss_coefficient * NLL(chosen|prefix)"}}},
      {"sampling",
       {{"max_path_num", 5}, {"max_depth_num", 64}, {"token_limit", 25000}, {"eval_samples", 10},
        {"eval_temperature", 0.2}}}};
}

std::filesystem::path manifest_path_for(const std::filesystem::path& data_file) {
  auto p = data_file;
  p += ".manifest.json";
  return p;
}

ExportResult export_sft(const std::vector<CotTrace>& traces, const std::vector<CodeProblem>& problems,
                        const std::filesystem::path& out, Verifier* reverify, const Json& config_echo) {
  std::map<std::string, const CodeProblem*> by_id;
  for (const auto& p : problems) by_id.emplace(p.id, &p);

  std::string body;
  std::size_t records = 0;
  std::vector<Json> excluded;
  auto exclude = [&](const std::string& id, std::string reason) {
    spdlog::warn("sft export: excluding {}: {}", id, reason);
    excluded.push_back(Json{{"problem_id", id}, {"reason", std::move(reason)}});
  };

  for (const auto& trace : traces) {
    auto it = by_id.find(trace.problem_id);
    if (it == by_id.end()) {
      exclude(trace.problem_id, "unknown problem id");
      continue;
    }
    if (!trace.verdict || !trace.verdict->passed()) {
      exclude(trace.problem_id, "trace verdict did not pass");
      continue;
    }
    try {
      trace.validate();
    } catch (const ValidationError& e) {
      exclude(trace.problem_id, std::string("invalid trace: ") + e.what());
      continue;
    }
    if (reverify) {
      const auto v = reverify->verify(*it->second, trace.final_code);
      if (!v.passed()) {
        exclude(trace.problem_id, "re-verification " + to_string(v.status));
        continue;
      }
    }
    body += to_jsonl_line(Json(make_sft_record(*it->second, trace)));
    ++records;
  }

  ExportResult result;
  write_dataset(out, "sft", body, records, excluded, config_echo, result);
  return result;
}

ExportResult export_step_dpo(const std::vector<PreferencePair>& pairs, const std::filesystem::path& out,
                             const Json& config_echo) {
  std::vector<StepDpoRecord> records;
  records.reserve(pairs.size());
  for (const auto& p : pairs) records.push_back(make_step_dpo_record(p));

  std::string body;
  for (const auto& r : records) body += to_jsonl_line(Json(r));
  ExportResult result;
  write_dataset(out, "step_dpo", body, records.size(), {}, config_echo, result);
  return result;
}

}  // namespace codecot
