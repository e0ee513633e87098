#pragma once

// JSON schema for the shared domain types and JSONL file helpers.
// Field names follow the type definitions in lower_snake_case.

#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "codecot/types.hpp"

namespace codecot {

void to_json(Json& j, const TestCase& t);
void from_json(const Json& j, TestCase& t);
void to_json(Json& j, const CodeProblem& p);
void from_json(const Json& j, CodeProblem& p);
void to_json(Json& j, const TestFailure& f);
void from_json(const Json& j, TestFailure& f);
void to_json(Json& j, const Verdict& v);
void from_json(const Json& j, Verdict& v);
void to_json(Json& j, const Segment& s);
void from_json(const Json& j, Segment& s);
void to_json(Json& j, const CotTrace& t);
void from_json(const Json& j, CotTrace& t);

/// Verdict without timing, for byte-stable artifacts.
Json verdict_to_stable_json(const Verdict& v);

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct JsonlLine {
  std::size_t line_number = 0;  // 1-based
  std::optional<Json> value;
  std::string error;  // set when the line is not valid JSON
};

/// Reads every non-blank line. Throws IoError if the file cannot be opened.
std::vector<JsonlLine> read_jsonl(const std::filesystem::path& path);
std::vector<JsonlLine> read_jsonl_text(const std::string& text);

/// Reads a JSONL file whose lines must all parse as T; the first bad line throws.
template <typename T>
std::vector<T> load_jsonl(const std::filesystem::path& path) {
  std::vector<T> out;
  for (auto& line : read_jsonl(path)) {
    if (!line.value) {
      throw IoError(path.string() + ":" + std::to_string(line.line_number) + ": " + line.error);
    }
    try {
      out.push_back(line.value->get<T>());
    } catch (const std::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(line.line_number) + ": " + e.what());
    }
  }
  return out;
}

/// One compact JSON object per line, `\n` terminated.
std::string to_jsonl_line(const Json& j);

void write_text_file(const std::filesystem::path& path, const std::string& content);
std::string read_text_file(const std::filesystem::path& path);

template <typename T>
void save_jsonl(const std::filesystem::path& path, const std::vector<T>& records) {
  std::string out;
  for (const auto& r : records) out += to_jsonl_line(Json(r));
  write_text_file(path, out);
}

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace codecot
