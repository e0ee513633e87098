#include "codecot/prompts.hpp"

#include "codecot/json_io.hpp"
#include "codecot/types.hpp"

namespace codecot {

PromptSet PromptSet::builtin() {
  PromptSet set;
  for (const auto& [name, text] : builtin_prompt_assets()) set.templates_[name] = text;
  return set;
}

PromptSet PromptSet::from_directory(const std::filesystem::path& dir) {
  PromptSet set = builtin();
  if (!std::filesystem::is_directory(dir)) throw IoError("prompt directory not found: " + dir.string());
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() != ".txt") continue;
    set.templates_[entry.path().stem().string()] = read_text_file(entry.path());
  }
  return set;
}

const std::string& PromptSet::raw(const std::string& name) const {
  auto it = templates_.find(name);
  if (it == templates_.end()) throw ValidationError("unknown_prompt", "no prompt template named '" + name + "'");
  return it->second;
}

std::string PromptSet::render(const std::string& name, const std::map<std::string, std::string>& vars) const {
  const std::string& text = raw(name);
  std::string out;
  out.reserve(text.size());
  std::size_t pos = 0;
  while (true) {
    auto open = text.find("{{", pos);
    if (open == std::string::npos) break;
    auto close = text.find("}}", open + 2);
    if (close == std::string::npos) break;
    out.append(text, pos, open - pos);
    std::string key = text.substr(open + 2, close - open - 2);
    auto it = vars.find(key);
    if (it == vars.end()) {
      throw ValidationError("prompt_placeholder", "template '" + name + "' needs a value for {{" + key + "}}");
    }
    out += it->second;
    pos = close + 2;
  }
  out.append(text, pos);
  // Asset files end with a newline; messages shouldn't.
  while (!out.empty() && out.back() == '\n') out.pop_back();
  return out;
}

std::vector<std::string> PromptSet::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : templates_) out.push_back(name);
  return out;
}

}  // namespace codecot
