#include "codecot/json_io.hpp"

#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <memory>
#include <sstream>

namespace codecot {

namespace {

const Json& require(const Json& j, const char* field) {
  if (!j.is_object()) throw ValidationError("schema", "expected a JSON object");
  auto it = j.find(field);
  if (it == j.end() || it->is_null()) throw ValidationError("schema", std::string("missing field '") + field + "'");
  return *it;
}

template <typename T>
T value_or(const Json& j, const char* field, T fallback) {
  auto it = j.find(field);
  if (it == j.end() || it->is_null()) return fallback;
  return it->get<T>();
}

}  // namespace

void to_json(Json& j, const TestCase& t) {
  j = Json{{"kind", to_string(t.kind)},
           {"input", t.input},
           {"expected_output", t.expected_output},
           {"assertion", t.assertion ? Json(*t.assertion) : Json(nullptr)}};
}

void from_json(const Json& j, TestCase& t) {
  t.kind = test_kind_from(value_or<std::string>(j, "kind", "stdin_stdout"));
  t.input = value_or<std::string>(j, "input", "");
  t.expected_output = value_or<std::string>(j, "expected_output", "");
  auto it = j.find("assertion");
  t.assertion = (it == j.end() || it->is_null()) ? std::nullopt : std::optional(it->get<std::string>());
  t.validate();
}

void to_json(Json& j, const CodeProblem& p) {
  j = Json{{"id", p.id},
           {"statement", p.statement},
           {"source", to_string(p.source)},
           {"difficulty", p.difficulty ? Json(to_string(*p.difficulty)) : Json(nullptr)},
           {"test_cases", p.test_cases},
           {"reference_solutions", p.reference_solutions},
           {"provenance", p.provenance}};
}

void from_json(const Json& j, CodeProblem& p) {
  p.id = require(j, "id").get<std::string>();
  p.statement = require(j, "statement").get<std::string>();
  p.source = problem_source_from(value_or<std::string>(j, "source", "collected"));
  auto d = j.find("difficulty");
  p.difficulty = (d == j.end() || d->is_null()) ? std::nullopt : std::optional(difficulty_from(d->get<std::string>()));
  p.test_cases = value_or<std::vector<TestCase>>(j, "test_cases", {});
  p.reference_solutions = value_or<std::vector<std::string>>(j, "reference_solutions", {});
  p.provenance = value_or<Json>(j, "provenance", Json::object());
  p.validate();
}

void to_json(Json& j, const TestFailure& f) {
  j = Json{{"test_index", f.test_index},
           {"expected", f.expected},
           {"actual", f.actual},
           {"stderr_excerpt", f.stderr_excerpt}};
}

void from_json(const Json& j, TestFailure& f) {
  f.test_index = value_or<std::size_t>(j, "test_index", 0);
  f.expected = value_or<std::string>(j, "expected", "");
  f.actual = value_or<std::string>(j, "actual", "");
  f.stderr_excerpt = value_or<std::string>(j, "stderr_excerpt", "");
}

Json verdict_to_stable_json(const Verdict& v) {
  return Json{{"status", to_string(v.status)},
              {"tests_run", v.tests_run},
              {"tests_passed", v.tests_passed},
              {"failures", v.failures},
              {"path", to_string(v.path)},
              {"detail", v.detail}};
}

void to_json(Json& j, const Verdict& v) {
  j = verdict_to_stable_json(v);
  j["duration_ms"] = v.duration.count();
}

void from_json(const Json& j, Verdict& v) {
  v.status = verdict_status_from(require(j, "status").get<std::string>());
  v.tests_run = value_or<std::size_t>(j, "tests_run", 0);
  v.tests_passed = value_or<std::size_t>(j, "tests_passed", 0);
  v.failures = value_or<std::vector<TestFailure>>(j, "failures", {});
  v.duration = std::chrono::milliseconds(value_or<long long>(j, "duration_ms", 0));
  v.path = verdict_path_from(value_or<std::string>(j, "path", "none"));
  v.detail = value_or<std::string>(j, "detail", "");
}

void to_json(Json& j, const Segment& s) { j = Json{{"kind", to_string(s.kind)}, {"steps", s.steps}}; }

void from_json(const Json& j, Segment& s) {
  s.kind = segment_kind_from(require(j, "kind").get<std::string>());
  s.steps = require(j, "steps").get<std::vector<std::string>>();
}

void to_json(Json& j, const CotTrace& t) {
  j = Json{{"problem_id", t.problem_id},
           {"segments", t.segments},
           {"final_code", t.final_code},
           {"verdict", t.verdict ? Json(*t.verdict) : Json(nullptr)},
           {"generation_meta", t.generation_meta}};
}

void from_json(const Json& j, CotTrace& t) {
  t.problem_id = require(j, "problem_id").get<std::string>();
  t.segments = require(j, "segments").get<std::vector<Segment>>();
  t.final_code = require(j, "final_code").get<std::string>();
  auto v = j.find("verdict");
  t.verdict = (v == j.end() || v->is_null()) ? std::nullopt : std::optional(v->get<Verdict>());
  t.generation_meta = value_or<Json>(j, "generation_meta", Json::object());
  t.validate();
}

std::vector<JsonlLine> read_jsonl_text(const std::string& text) {
  std::vector<JsonlLine> out;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    JsonlLine rec;
    rec.line_number = n;
    try {
      rec.value = Json::parse(line);
    } catch (const Json::parse_error& e) {
      rec.error = e.what();
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<JsonlLine> read_jsonl(const std::filesystem::path& path) { return read_jsonl_text(read_text_file(path)); }

std::string to_jsonl_line(const Json& j) { return j.dump(-1, ' ', false, Json::error_handler_t::replace) + "\n"; }

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << content;
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest.data(), &len) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xF];
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_text_file(path)); }

}  // namespace codecot
