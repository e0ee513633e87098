#include "codecot/tokens.hpp"

#include <cctype>

#include "codecot/types.hpp"

namespace codecot {

std::string to_string(TokenRule rule) {
  return rule == TokenRule::whitespace ? "whitespace" : "codepoint";
}

TokenRule token_rule_from(const std::string& s) {
  if (s == "whitespace") return TokenRule::whitespace;
  if (s == "codepoint") return TokenRule::codepoint;
  throw ValidationError("unknown_token_rule", "'" + s + "'");
}

void TokenBudget::validate() const {
  if (limit == 0) throw ValidationError("token_limit_positive", "token budget limit must be > 0");
}

std::size_t count_tokens(std::string_view text, const TokenBudget& budget) {
  budget.validate();
  std::size_t n = 0;
  if (budget.counter == TokenRule::codepoint) {
    for (unsigned char c : text) {
      if ((c & 0xC0) != 0x80) ++n;
    }
    return n;
  }
  bool in_token = false;
  for (unsigned char c : text) {
    const bool space = std::isspace(c) != 0;
    if (!space && !in_token) ++n;
    in_token = !space;
  }
  return n;
}

BudgetCheck check_budget(std::string_view text, const TokenBudget& budget) {
  BudgetCheck out;
  out.count = count_tokens(text, budget);
  out.truncated = out.count > budget.limit;
  return out;
}

std::size_t budget_prefix_length(std::string_view text, const TokenBudget& budget) {
  budget.validate();
  std::size_t n = 0;
  bool in_token = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    bool starts = false;
    if (budget.counter == TokenRule::codepoint) {
      starts = (c & 0xC0) != 0x80;
    } else {
      const bool space = std::isspace(c) != 0;
      starts = !space && !in_token;
      in_token = !space;
    }
    if (starts && ++n > budget.limit) return i;
  }
  return text.size();
}

}  // namespace codecot
