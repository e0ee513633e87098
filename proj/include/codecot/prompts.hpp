#pragma once

// Agent prompt templates. Defaults are compiled in from assets/prompts/*.txt;
// a directory of edited copies overrides them file by file.

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace codecot {

class PromptSet {
 public:
  /// The compiled-in defaults.
  static PromptSet builtin();

  /// Defaults, with `<dir>/<name>.txt` replacing any template it names.
  static PromptSet from_directory(const std::filesystem::path& dir);

  const std::string& raw(const std::string& name) const;

  /// Substitutes every `{{key}}`. Throws ValidationError on an unknown
  /// template or a placeholder without a value.
  std::string render(const std::string& name, const std::map<std::string, std::string>& vars = {}) const;

  void set(const std::string& name, std::string text) { templates_[name] = std::move(text); }
  std::vector<std::string> names() const;

 private:
  std::map<std::string, std::string> templates_;
};

/// Name/text pairs generated from the asset directory at build time.
const std::vector<std::pair<std::string, std::string>>& builtin_prompt_assets();

}  // namespace codecot
