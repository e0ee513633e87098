#include <doctest.h>

#include <random>

#include "../support/oracles.hpp"
#include "codecot/ngram.hpp"
#include "codecot/tokens.hpp"

using namespace codecot;

TEST_SUITE("tokens") {

TEST_CASE("whitespace and codepoint counting") {
  CHECK(count_tokens("") == 0);
  CHECK(count_tokens("  a  bb\tc\n") == 3);
  TokenBudget cp{10, TokenRule::codepoint};
  CHECK(count_tokens("héllo", cp) == 5);
}

TEST_CASE("budget boundary") {
  TokenBudget b{3, TokenRule::whitespace};
  CHECK_FALSE(check_budget("a b c", b).truncated);
  CHECK(check_budget("a b c d", b).truncated);
  CHECK(check_budget("a b c d", b).count == 4);
  CHECK(budget_prefix_length("a b c d e", b) == std::string("a b c ").size());
  CHECK(budget_prefix_length("a b", b) == 3);
  CHECK_THROWS_AS(count_tokens("x", TokenBudget{0, TokenRule::whitespace}), ValidationError);
}

TEST_CASE("default budget is 25000 whitespace tokens") {
  TokenBudget b;
  CHECK(b.limit == 25000);
  std::string text;
  for (int i = 0; i < 25000; ++i) text += "t ";
  CHECK_FALSE(check_budget(text, b).truncated);
  CHECK(check_budget(text + "one_more", b).truncated);
}

}

TEST_SUITE("ngram") {

TEST_CASE("normalization lowercases and splits punctuation") {
  auto toks = normalize_tokens("Hello,  WORLD!\nfoo_bar");
  std::vector<std::string> texts;
  for (auto& t : toks) texts.push_back(t.text);
  CHECK(texts == std::vector<std::string>{"hello", ",", "world", "!", "foo_bar"});
  CHECK(toks[2].begin == 8);
}

TEST_CASE("overlap agrees with the pairwise oracle on random text") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> w(0, 5);
  auto random_words = [&](int k) {
    std::string s;
    for (int i = 0; i < k; ++i) s += (i ? " " : "") + std::string(1, static_cast<char>('a' + w(rng)));
    return s;
  };
  for (int i = 0; i < 300; ++i) {
    const auto a = random_words(12);
    const auto b = random_words(12);
    for (std::size_t n : {1u, 2u, 3u, 4u}) {
      CHECK(ngram_overlap(a, b, n) == oracle::shares_ngram(a, b, n));
    }
  }
}

TEST_CASE("planted overlaps: 10 and 11 removed, 9 kept, oracle agrees") {
  auto c = oracle::planted_corpus(100, 20, 99);
  auto result = decontaminate(c.problems, c.holdout, 10);
  std::set<std::string> removed;
  for (const auto& r : result.removed) removed.insert(r.problem.id);

  std::vector<std::string> texts;
  for (const auto& h : c.holdout) texts.push_back(h.text);
  CHECK(removed == oracle::naive_contaminated(c.problems, texts, 10));
  CHECK(removed == c.planted_long);
  for (const auto& id : c.planted_short) CHECK_FALSE(removed.count(id));
  CHECK(result.kept.size() + result.removed.size() == c.problems.size());

  for (const auto& r : result.removed) {
    CHECK_FALSE(r.witness_gram.empty());
    CHECK(oracle::tokenize(r.witness_gram).size() == 10);
  }
}

TEST_CASE("index stores normalized keys") {
  NGramIndex idx(3);
  idx.add("src", "A b, C");
  CHECK(idx.size() == 2);
  auto hit = idx.first_match("x a B ,");
  REQUIRE(hit);
  CHECK(hit->gram == "a b ,");
  CHECK(hit->source_id == "src");
  CHECK(idx.normalization() == kNormalizationRule);
}

TEST_CASE("empty holdout is refused") {
  CHECK_THROWS_AS(decontaminate({}, {}, 10), std::invalid_argument);
}

TEST_CASE("overlapping spans point into the text") {
  const std::string text = "alpha beta gamma delta";
  auto spans = overlapping_spans(text, "x beta gamma y", 2);
  REQUIRE(spans.size() == 1);
  CHECK(text.substr(spans[0].first, spans[0].second - spans[0].first) == "beta gamma");
}

}
