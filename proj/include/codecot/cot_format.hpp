#pragma once

// Tag-based chain-of-thought text format:
//
//   <ChainOfThought><thinking>A<step>B</thinking><reflection>R</reflection>...</ChainOfThought>
//   ```python
//   <final code>
//   ```
//
// `<step>` separates adjacent steps inside a thinking segment (N steps, N-1
// separators). Reflection segments hold exactly one step. The format is the
// SFT training text, so serialize_cot must stay byte-stable.

#include <array>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "codecot/types.hpp"

namespace codecot {

namespace tags {
inline constexpr std::string_view kCotOpen = "<ChainOfThought>";
inline constexpr std::string_view kCotClose = "</ChainOfThought>";
inline constexpr std::string_view kThinkingOpen = "<thinking>";
inline constexpr std::string_view kThinkingClose = "</thinking>";
inline constexpr std::string_view kReflectionOpen = "<reflection>";
inline constexpr std::string_view kReflectionClose = "</reflection>";
inline constexpr std::string_view kStep = "<step>";

inline constexpr std::array<std::string_view, 7> kAll{kCotOpen,        kCotClose,        kThinkingOpen, kThinkingClose,
                                                      kReflectionOpen, kReflectionClose, kStep};
}  // namespace tags

inline constexpr std::string_view kDefaultFenceLanguage = "python";

std::string serialize_cot(const CotTrace& trace);

enum class CotParseErrorKind {
  unclosed_tag,
  interleaved_tags,
  missing_final_code,
  unterminated_code_block,
  unexpected_content,
  invalid_trace,
};

std::string to_string(CotParseErrorKind);

class CotParseError : public std::runtime_error {
 public:
  CotParseError(CotParseErrorKind kind, std::size_t offset, const std::string& what)
      : std::runtime_error(to_string(kind) + " at byte " + std::to_string(offset) + ": " + what),
        kind_(kind),
        offset_(offset) {}
  CotParseErrorKind kind() const noexcept { return kind_; }
  std::size_t offset() const noexcept { return offset_; }

 private:
  CotParseErrorKind kind_;
  std::size_t offset_;
};

/// Strict inverse of serialize_cot. The returned trace carries no verdict and
/// empty generation metadata; `problem_id` is copied from the argument.
CotTrace parse_cot(std::string_view text, std::string problem_id = {});

struct CodeBlock {
  std::string code;
  std::string language;
  bool unterminated = false;
  std::size_t offset = 0;  // byte offset of the opening fence
  std::size_t end = 0;     // byte offset just past the closing fence line
  bool operator==(const CodeBlock&) const = default;
};

/// All fenced blocks in order. Fences are lines whose first non-space
/// characters (at most three spaces of indent) are three backticks; a block
/// still open at end of text runs to the end and is flagged unterminated.
std::vector<CodeBlock> find_code_blocks(std::string_view text);

std::optional<CodeBlock> extract_last_code_block(std::string_view text);

/// One step as seen by the lenient scanner used on model output.
struct ScannedStep {
  SegmentKind kind = SegmentKind::thinking;
  std::string text;
  bool operator==(const ScannedStep&) const = default;
};

struct ScannedCot {
  std::vector<ScannedStep> steps;
  std::optional<CodeBlock> final_code;
  bool closed = false;  // saw </ChainOfThought>
};

/// Best-effort reading of generated text. Never throws: unknown structure is
/// folded into thinking steps, empty steps are dropped, and text without any
/// tags is split on `<step>` up to its first code fence.
ScannedCot scan_cot(std::string_view text);

/// Throws ValidationError if `text` contains a reserved tag.
void check_no_reserved_tags(std::string_view text, const char* rule);

/// Removes every reserved tag occurrence from model-authored text.
std::string strip_reserved_tags(std::string_view text);

}  // namespace codecot
