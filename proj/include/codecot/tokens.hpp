#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace codecot {

/// Deterministic, backend-independent token counting rules.
enum class TokenRule {
  whitespace,  // maximal runs of non-whitespace bytes
  codepoint,   // UTF-8 code points (continuation bytes are not counted)
};

std::string to_string(TokenRule);
TokenRule token_rule_from(const std::string&);

struct TokenBudget {
  std::size_t limit = 25000;
  TokenRule counter = TokenRule::whitespace;

  void validate() const;  // limit > 0
};

std::size_t count_tokens(std::string_view text, const TokenBudget& budget = {});

struct BudgetCheck {
  std::size_t count = 0;
  bool truncated = false;  // count exceeds the budget limit
};

BudgetCheck check_budget(std::string_view text, const TokenBudget& budget);

/// Length in bytes of the longest prefix of `text` holding at most
/// `budget.limit` tokens.
std::size_t budget_prefix_length(std::string_view text, const TokenBudget& budget);

}  // namespace codecot
