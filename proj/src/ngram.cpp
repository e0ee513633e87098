#include "codecot/ngram.hpp"

#include "codecot/json_io.hpp"

#include <cctype>
#include <stdexcept>
#include <unordered_set>

namespace codecot {

namespace {

bool is_word_byte(unsigned char c) { return c >= 0x80 || std::isalnum(c) != 0 || c == '_'; }

std::string window_key(const std::vector<NormToken>& tokens, std::size_t start, std::size_t n) {
  std::string key;
  for (std::size_t i = start; i < start + n; ++i) {
    if (i > start) key += ' ';
    key += tokens[i].text;
  }
  return key;
}

std::unordered_set<std::string> window_set(const std::vector<NormToken>& tokens, std::size_t n) {
  std::unordered_set<std::string> out;
  if (tokens.size() < n) return out;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) out.insert(window_key(tokens, i, n));
  return out;
}

void require_positive(std::size_t n) {
  if (n == 0) throw std::invalid_argument("n-gram size must be >= 1");
}

}  // namespace

std::vector<NormToken> normalize_tokens(std::string_view text) {
  std::vector<NormToken> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
    } else if (is_word_byte(c)) {
      NormToken tok;
      tok.begin = i;
      while (i < text.size() && is_word_byte(static_cast<unsigned char>(text[i]))) {
        tok.text += static_cast<char>(std::tolower(static_cast<unsigned char>(text[i])));
        ++i;
      }
      tok.end = i;
      out.push_back(std::move(tok));
    } else {
      out.push_back({std::string(1, static_cast<char>(c)), i, i + 1});
      ++i;
    }
  }
  return out;
}

bool ngram_overlap(std::string_view a, std::string_view b, std::size_t n) {
  require_positive(n);
  const auto ta = normalize_tokens(a);
  const auto tb = normalize_tokens(b);
  if (ta.size() < n || tb.size() < n) return false;
  const auto grams = window_set(ta, n);
  for (std::size_t i = 0; i + n <= tb.size(); ++i) {
    if (grams.count(window_key(tb, i, n))) return true;
  }
  return false;
}

std::vector<std::pair<std::size_t, std::size_t>> overlapping_spans(std::string_view text, std::string_view reference,
                                                                   std::size_t n) {
  require_positive(n);
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  const auto tt = normalize_tokens(text);
  const auto grams = window_set(normalize_tokens(reference), n);
  if (tt.size() < n || grams.empty()) return spans;

  std::vector<bool> covered(tt.size(), false);
  for (std::size_t i = 0; i + n <= tt.size(); ++i) {
    if (grams.count(window_key(tt, i, n))) {
      for (std::size_t k = i; k < i + n; ++k) covered[k] = true;
    }
  }
  for (std::size_t i = 0; i < tt.size();) {
    if (!covered[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < tt.size() && covered[j + 1]) ++j;
    spans.emplace_back(tt[i].begin, tt[j].end);
    i = j + 1;
  }
  return spans;
}

NGramIndex::NGramIndex(std::size_t n) : n_(n) { require_positive(n); }

void NGramIndex::add(const std::string& source_id, std::string_view text) {
  const auto tokens = normalize_tokens(text);
  if (tokens.size() < n_) return;
  for (std::size_t i = 0; i + n_ <= tokens.size(); ++i) {
    auto& sources = grams_[window_key(tokens, i, n_)];
    if (sources.empty() || sources.back() != source_id) sources.push_back(source_id);
  }
}

std::optional<NGramIndex::Hit> NGramIndex::first_match(std::string_view text) const {
  const auto tokens = normalize_tokens(text);
  if (tokens.size() < n_) return std::nullopt;
  for (std::size_t i = 0; i + n_ <= tokens.size(); ++i) {
    auto key = window_key(tokens, i, n_);
    if (auto it = grams_.find(key); it != grams_.end()) return Hit{std::move(key), it->second.front()};
  }
  return std::nullopt;
}

std::vector<std::string> NGramIndex::keys() const {
  std::vector<std::string> out;
  out.reserve(grams_.size());
  for (const auto& [k, _] : grams_) out.push_back(k);
  return out;
}

void to_json(Json& j, const HoldoutText& h) { j = Json{{"id", h.id}, {"text", h.text}}; }

void from_json(const Json& j, HoldoutText& h) {
  h.id = j.at("id").get<std::string>();
  if (j.contains("text")) {
    h.text = j.at("text").get<std::string>();
  } else {
    h.text = j.at("statement").get<std::string>();
  }
}

void to_json(Json& j, const RemovedProblem& r) {
  j = Json{{"problem", r.problem}, {"witness_gram", r.witness_gram}, {"holdout_id", r.holdout_id}};
}

DecontaminationResult decontaminate(const std::vector<CodeProblem>& problems, const std::vector<HoldoutText>& holdout,
                                    std::size_t n) {
  if (holdout.empty()) throw std::invalid_argument("decontaminate needs at least one holdout text");
  NGramIndex index(n);
  for (const auto& h : holdout) index.add(h.id, h.text);

  DecontaminationResult out;
  for (const auto& p : problems) {
    if (auto hit = index.first_match(p.statement)) {
      out.removed.push_back({p, std::move(hit->gram), std::move(hit->source_id)});
    } else {
      out.kept.push_back(p);
    }
  }
  return out;
}

}  // namespace codecot
