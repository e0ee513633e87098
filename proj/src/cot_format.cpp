#include "codecot/cot_format.hpp"

#include <algorithm>
#include <cctype>

namespace codecot {

namespace {

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

struct TagHit {
  std::size_t pos = std::string_view::npos;
  std::string_view tag;
};

TagHit next_tag(std::string_view text, std::size_t from) {
  for (std::size_t i = text.find('<', from); i != std::string_view::npos; i = text.find('<', i + 1)) {
    for (auto tag : tags::kAll) {
      if (text.compare(i, tag.size(), tag) == 0) return {i, tag};
    }
  }
  return {};
}

}  // namespace

std::string to_string(CotParseErrorKind kind) {
  switch (kind) {
    case CotParseErrorKind::unclosed_tag: return "unclosed_tag";
    case CotParseErrorKind::interleaved_tags: return "interleaved_tags";
    case CotParseErrorKind::missing_final_code: return "missing_final_code";
    case CotParseErrorKind::unterminated_code_block: return "unterminated_code_block";
    case CotParseErrorKind::unexpected_content: return "unexpected_content";
    case CotParseErrorKind::invalid_trace: return "invalid_trace";
  }
  return "?";
}

void check_no_reserved_tags(std::string_view text, const char* rule) {
  for (auto tag : tags::kAll) {
    if (text.find(tag) != std::string_view::npos) {
      throw ValidationError(rule, "text contains reserved tag " + std::string(tag));
    }
  }
}

std::string strip_reserved_tags(std::string_view text) {
  std::string out(text);
  bool changed = true;
  while (changed) {
    changed = false;
    for (auto tag : tags::kAll) {
      for (auto p = out.find(tag); p != std::string::npos; p = out.find(tag, p)) {
        out.erase(p, tag.size());
        changed = true;
      }
    }
  }
  return out;
}

void CotTrace::validate() const {
  if (segments.empty()) throw ValidationError("segments_nonempty", "trace has no segments");
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& seg = segments[i];
    if (seg.kind == SegmentKind::thinking && seg.steps.empty()) {
      throw ValidationError("thinking_has_steps", "thinking segment " + std::to_string(i) + " has no steps");
    }
    if (seg.kind == SegmentKind::reflection && seg.steps.size() != 1) {
      throw ValidationError("reflection_single_step", "reflection segment " + std::to_string(i) + " has " +
                                                          std::to_string(seg.steps.size()) + " steps");
    }
    if (seg.kind == SegmentKind::reflection && i > 0 && segments[i - 1].kind == SegmentKind::reflection) {
      throw ValidationError("no_adjacent_reflections", "segments " + std::to_string(i - 1) + " and " +
                                                           std::to_string(i) + " are both reflections");
    }
    for (const auto& step : seg.steps) {
      if (step.empty()) throw ValidationError("step_nonempty", "empty step in segment " + std::to_string(i));
      check_no_reserved_tags(step, "step_reserved_tag");
    }
  }
  if (final_code.empty()) throw ValidationError("final_code_nonempty", "trace has no final code");
  if (final_code.find("```") != std::string::npos) {
    throw ValidationError("final_code_fence", "final code contains a code fence");
  }
}

std::string serialize_cot(const CotTrace& trace) {
  trace.validate();
  std::string out(tags::kCotOpen);
  for (const auto& seg : trace.segments) {
    if (seg.kind == SegmentKind::thinking) {
      out += tags::kThinkingOpen;
      for (std::size_t i = 0; i < seg.steps.size(); ++i) {
        if (i > 0) out += tags::kStep;
        out += seg.steps[i];
      }
      out += tags::kThinkingClose;
    } else {
      out += tags::kReflectionOpen;
      out += seg.steps.front();
      out += tags::kReflectionClose;
    }
  }
  out += tags::kCotClose;
  out += "\n```";
  out += kDefaultFenceLanguage;
  out += "\n";
  out += trace.final_code;
  out += "\n```";
  return out;
}

std::vector<CodeBlock> find_code_blocks(std::string_view text) {
  std::vector<CodeBlock> blocks;
  bool open = false;
  CodeBlock current;
  std::size_t content_start = 0;

  std::size_t line_start = 0;
  while (true) {
    std::size_t nl = text.find('\n', line_start);
    std::size_t line_end = nl == std::string_view::npos ? text.size() : nl;
    std::string_view line = text.substr(line_start, line_end - line_start);

    std::size_t indent = 0;
    while (indent < line.size() && indent < 3 && line[indent] == ' ') ++indent;
    std::size_t ticks = indent;
    while (ticks < line.size() && line[ticks] == '`') ++ticks;
    const bool fence = ticks - indent >= 3;
    std::string_view info = line.substr(ticks);

    if (fence && !open) {
      while (!info.empty() && std::isspace(static_cast<unsigned char>(info.front()))) info.remove_prefix(1);
      while (!info.empty() && std::isspace(static_cast<unsigned char>(info.back()))) info.remove_suffix(1);
      current = CodeBlock{};
      current.language = std::string(info);
      current.offset = line_start;
      open = true;
      content_start = nl == std::string_view::npos ? text.size() : nl + 1;
    } else if (fence && open && is_blank(info)) {
      current.code = line_start > content_start
                         ? std::string(text.substr(content_start, line_start - 1 - content_start))
                         : std::string();
      current.end = line_end;
      blocks.push_back(std::move(current));
      open = false;
    }

    if (nl == std::string_view::npos) break;
    line_start = nl + 1;
  }

  if (open) {
    current.code = std::string(text.substr(std::min(content_start, text.size())));
    current.unterminated = true;
    current.end = text.size();
    blocks.push_back(std::move(current));
  }
  return blocks;
}

std::optional<CodeBlock> extract_last_code_block(std::string_view text) {
  auto blocks = find_code_blocks(text);
  if (blocks.empty()) return std::nullopt;
  return std::move(blocks.back());
}

CotTrace parse_cot(std::string_view text, std::string problem_id) {
  using K = CotParseErrorKind;

  std::size_t pos = 0;
  while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  if (text.compare(pos, tags::kCotOpen.size(), tags::kCotOpen) != 0) {
    throw CotParseError(K::unexpected_content, pos, "expected <ChainOfThought>");
  }

  struct Open {
    std::string_view tag;
    std::size_t offset;
  };
  std::vector<Open> stack{{tags::kCotOpen, pos}};
  pos += tags::kCotOpen.size();

  CotTrace trace;
  trace.problem_id = std::move(problem_id);
  std::size_t chunk_start = pos;
  std::size_t close_end = std::string_view::npos;

  while (close_end == std::string_view::npos) {
    TagHit hit = next_tag(text, pos);
    if (hit.pos == std::string_view::npos) {
      const auto& inner = stack.back();
      throw CotParseError(K::unclosed_tag, inner.offset, std::string(inner.tag) + " is never closed");
    }
    std::string_view chunk = text.substr(chunk_start, hit.pos - chunk_start);
    const std::string_view top = stack.back().tag;

    if (top == tags::kCotOpen) {
      if (!is_blank(chunk)) throw CotParseError(K::unexpected_content, chunk_start, "text outside any segment");
      if (hit.tag == tags::kThinkingOpen || hit.tag == tags::kReflectionOpen) {
        stack.push_back({hit.tag, hit.pos});
        trace.segments.push_back(
            {hit.tag == tags::kThinkingOpen ? SegmentKind::thinking : SegmentKind::reflection, {}});
      } else if (hit.tag == tags::kCotClose) {
        stack.pop_back();
        close_end = hit.pos + hit.tag.size();
      } else {
        throw CotParseError(K::interleaved_tags, hit.pos, std::string(hit.tag) + " outside a segment");
      }
    } else {
      const bool thinking = top == tags::kThinkingOpen;
      const auto close = thinking ? tags::kThinkingClose : tags::kReflectionClose;
      if (hit.tag == tags::kStep && thinking) {
        trace.segments.back().steps.emplace_back(chunk);
      } else if (hit.tag == close) {
        trace.segments.back().steps.emplace_back(chunk);
        stack.pop_back();
      } else {
        throw CotParseError(K::interleaved_tags, hit.pos,
                            std::string(hit.tag) + " inside " + std::string(top) + " opened at byte " +
                                std::to_string(stack.back().offset));
      }
    }
    pos = hit.pos + hit.tag.size();
    chunk_start = pos;
  }

  std::string_view rest = text.substr(close_end);
  auto blocks = find_code_blocks(rest);
  if (blocks.empty()) throw CotParseError(K::missing_final_code, close_end, "no fenced code block after </ChainOfThought>");
  const auto& block = blocks.front();
  if (!is_blank(rest.substr(0, block.offset))) {
    throw CotParseError(K::unexpected_content, close_end, "text between </ChainOfThought> and the code block");
  }
  if (block.unterminated) {
    throw CotParseError(K::unterminated_code_block, close_end + block.offset, "final code fence is never closed");
  }
  if (blocks.size() > 1) {
    throw CotParseError(K::unexpected_content, close_end + blocks[1].offset, "more than one final code block");
  }
  if (!is_blank(rest.substr(block.end))) {
    throw CotParseError(K::unexpected_content, close_end + block.end, "text after the final code block");
  }
  trace.final_code = block.code;

  try {
    trace.validate();
  } catch (const ValidationError& e) {
    throw CotParseError(K::invalid_trace, 0, e.what());
  }
  return trace;
}

ScannedCot scan_cot(std::string_view text) {
  ScannedCot out;

  TagHit first = next_tag(text, 0);
  if (first.pos == std::string_view::npos) {
    auto blocks = find_code_blocks(text);
    std::string_view head = blocks.empty() ? text : text.substr(0, blocks.front().offset);
    if (!is_blank(head)) out.steps.push_back({SegmentKind::thinking, std::string(head)});
    if (!blocks.empty()) out.final_code = blocks.back();
    return out;
  }

  enum class Where { preamble, cot, thinking, reflection };
  Where where = Where::preamble;
  std::size_t chunk_start = 0;
  std::size_t pos = 0;
  std::size_t last_segment_close = 0;

  auto flush = [&](std::string_view chunk) {
    if (is_blank(chunk)) return;
    if (where == Where::reflection) {
      out.steps.push_back({SegmentKind::reflection, std::string(chunk)});
    } else if (where != Where::preamble) {
      out.steps.push_back({SegmentKind::thinking, std::string(chunk)});
    }
  };

  for (TagHit hit = first; hit.pos != std::string_view::npos; hit = next_tag(text, pos)) {
    std::string_view chunk = text.substr(chunk_start, hit.pos - chunk_start);
    if (where == Where::preamble && hit.tag == tags::kStep) {
      where = Where::thinking;  // bare "a<step>b" replies
      flush(chunk);
    } else if (where == Where::cot && hit.tag != tags::kCotClose) {
      // Loose text between segments; keep it unless it's the lead-in to the final code.
      flush(chunk);
    } else if (where == Where::thinking || where == Where::reflection) {
      flush(chunk);
    }
    pos = hit.pos + hit.tag.size();
    chunk_start = pos;

    if (hit.tag == tags::kCotOpen) {
      where = Where::cot;
    } else if (hit.tag == tags::kThinkingOpen) {
      where = Where::thinking;
    } else if (hit.tag == tags::kReflectionOpen) {
      where = Where::reflection;
    } else if (hit.tag == tags::kThinkingClose || hit.tag == tags::kReflectionClose) {
      where = Where::cot;
      last_segment_close = pos;
    } else if (hit.tag == tags::kCotClose) {
      out.closed = true;
      auto rest = text.substr(pos);
      if (auto block = extract_last_code_block(rest)) {
        block->offset += pos;
        out.final_code = std::move(*block);
      }
      return out;
    }
  }

  std::string_view tail = text.substr(chunk_start);
  if (where == Where::thinking || where == Where::reflection) {
    auto blocks = find_code_blocks(tail);
    if (blocks.empty()) {
      flush(tail);
    } else {
      flush(tail.substr(0, blocks.front().offset));
      out.final_code = blocks.back();
      out.final_code->offset += chunk_start;
    }
  } else {
    auto blocks = find_code_blocks(tail);
    std::string_view head = blocks.empty() ? tail : tail.substr(0, blocks.front().offset);
    flush(head);
    if (!blocks.empty() && chunk_start >= last_segment_close) {
      out.final_code = blocks.back();
      out.final_code->offset += chunk_start;
    }
  }
  return out;
}

}  // namespace codecot
