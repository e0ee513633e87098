#pragma once

// Token n-gram overlap for decontamination and reference-leak checks.
//
// Normalization rule "lower-ws-punct-v1": ASCII letters are lowercased,
// whitespace runs separate tokens, every ASCII punctuation character is a
// token of its own, and word tokens are runs of [A-Za-z0-9_] or non-ASCII bytes.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "codecot/types.hpp"

namespace codecot {

inline constexpr std::string_view kNormalizationRule = "lower-ws-punct-v1";

struct NormToken {
  std::string text;
  std::size_t begin = 0;  // byte span in the source text
  std::size_t end = 0;
};

std::vector<NormToken> normalize_tokens(std::string_view text);

/// True iff some length-n window of normalized tokens occurs in both texts.
/// Throws std::invalid_argument for n == 0.
bool ngram_overlap(std::string_view a, std::string_view b, std::size_t n);

/// Byte spans of `text` covered by any n-gram that also occurs in `reference`,
/// merged and in order.
std::vector<std::pair<std::size_t, std::size_t>> overlapping_spans(std::string_view text, std::string_view reference,
                                                                   std::size_t n);

class NGramIndex {
 public:
  explicit NGramIndex(std::size_t n = 10);

  void add(const std::string& source_id, std::string_view text);

  struct Hit {
    std::string gram;       // the shared n-gram, tokens joined by single spaces
    std::string source_id;  // first indexed source containing it
  };

  /// First window of `text` (in text order) present in the index.
  std::optional<Hit> first_match(std::string_view text) const;

  std::size_t n() const noexcept { return n_; }
  const std::string& normalization() const noexcept { return normalization_; }
  std::size_t size() const noexcept { return grams_.size(); }

  /// Every stored key, for invariant checks.
  std::vector<std::string> keys() const;

 private:
  std::size_t n_;
  std::string normalization_{kNormalizationRule};
  std::unordered_map<std::string, std::vector<std::string>> grams_;
};

struct HoldoutText {
  std::string id;
  std::string text;
};

void to_json(Json& j, const HoldoutText& h);
void from_json(const Json& j, HoldoutText& h);  // accepts "text" or "statement"

struct RemovedProblem {
  CodeProblem problem;
  std::string witness_gram;
  std::string holdout_id;
};

void to_json(Json& j, const RemovedProblem& r);

struct DecontaminationResult {
  std::vector<CodeProblem> kept;
  std::vector<RemovedProblem> removed;
};

/// Splits problems by n-gram overlap of their statements with any holdout
/// text. Input order is preserved in both halves. Throws std::invalid_argument
/// when `holdout` is empty.
DecontaminationResult decontaminate(const std::vector<CodeProblem>& problems, const std::vector<HoldoutText>& holdout,
                                    std::size_t n = 10);

}  // namespace codecot
