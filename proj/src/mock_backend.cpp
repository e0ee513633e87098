#include "codecot/mock_backend.hpp"

#include "codecot/json_io.hpp"
#include "codecot/tokens.hpp"

namespace codecot {

namespace {

std::string joined_contents(const CompletionRequest& request) {
  std::string out;
  for (const auto& m : request.messages) {
    out += m.content;
    out += '\n';
  }
  return out;
}

std::size_t common_prefix(const std::string& a, const std::string& b) {
  std::size_t n = 0;
  while (n < a.size() && n < b.size() && a[n] == b[n]) ++n;
  return n;
}

CompletionRequest request_from_json(const Json& j) {
  CompletionRequest r;
  for (const auto& m : j.at("messages")) {
    r.messages.push_back({role_from(m.value("role", "user")), m.at("content").get<std::string>()});
  }
  r.temperature = j.value("temperature", 0.2);
  r.n_samples = j.value("n_samples", std::size_t{1});
  return r;
}

}  // namespace

void MockBackend::script(const std::string& fingerprint, std::vector<std::string> replies) {
  std::lock_guard lock(mu_);
  if (fingerprint == "*") {
    if (!fallback_) fallback_.emplace();
    fallback_->insert(fallback_->end(), replies.begin(), replies.end());
    return;
  }
  auto& s = scripts_[fingerprint];
  s.replies.insert(s.replies.end(), replies.begin(), replies.end());
}

void MockBackend::script(const CompletionRequest& request, std::vector<std::string> replies) {
  const auto key = request_fingerprint(request);
  script(key, std::move(replies));
  std::lock_guard lock(mu_);
  scripts_[key].preview = joined_contents(request);
}

void MockBackend::script_fallback(std::vector<std::string> replies) { script("*", std::move(replies)); }

void MockBackend::load_fixture_text(const std::string& text) {
  for (const auto& line : read_jsonl_text(text)) {
    if (!line.value) throw IoError("mock fixture line " + std::to_string(line.line_number) + ": " + line.error);
    const Json& j = *line.value;
    auto replies = j.at("replies").get<std::vector<std::string>>();
    if (j.contains("request")) {
      script(request_from_json(j.at("request")), std::move(replies));
    } else {
      script(j.at("key").get<std::string>(), std::move(replies));
    }
  }
}

void MockBackend::load_fixture(const std::filesystem::path& path) { load_fixture_text(read_text_file(path)); }

std::string MockBackend::nearest_key(const CompletionRequest& request, const std::string& fingerprint) const {
  const auto contents = joined_contents(request);
  std::string best;
  std::size_t best_score = 0;
  for (const auto& [key, s] : scripts_) {
    const std::size_t score = s.preview.empty() ? common_prefix(key, fingerprint) : common_prefix(s.preview, contents);
    if (best.empty() || score > best_score) {
      best = key;
      best_score = score;
    }
  }
  return best;
}

CompletionResponse MockBackend::complete(const CompletionRequest& request) {
  try {
    request.validate();
  } catch (const ValidationError& e) {
    throw BackendError(BackendErrorKind::invalid_request, e.what());
  }
  const auto key = request_fingerprint(request);

  std::lock_guard lock(mu_);
  history_.push_back(request);

  std::deque<std::string>* queue = nullptr;
  if (auto it = scripts_.find(key); it != scripts_.end()) {
    queue = &it->second.replies;
  } else if (fallback_) {
    queue = &*fallback_;
  } else {
    std::string msg = "no script for fingerprint " + key;
    if (auto near = nearest_key(request, key); !near.empty()) {
      msg += "; nearest key " + near;
      if (const auto& preview = scripts_.at(near).preview; !preview.empty()) {
        msg += " (" + preview.substr(0, 80) + ")";
      }
    } else {
      msg += "; no keys are scripted";
    }
    throw BackendError(BackendErrorKind::unmatched_request, msg);
  }

  if (queue->size() < request.n_samples) {
    throw BackendError(BackendErrorKind::script_exhausted,
                       "script for " + key + " has " + std::to_string(queue->size()) + " replies left, " +
                           std::to_string(request.n_samples) + " requested");
  }

  CompletionResponse resp;
  resp.backend_id = id_;
  for (std::size_t i = 0; i < request.n_samples; ++i) {
    resp.samples.push_back(std::move(queue->front()));
    queue->pop_front();
    resp.truncated_flags.push_back(false);
    resp.usage.completion_tokens += count_tokens(resp.samples.back());
  }
  for (const auto& m : request.messages) resp.usage.prompt_tokens += count_tokens(m.content);
  return resp;
}

std::size_t MockBackend::calls() const {
  std::lock_guard lock(mu_);
  return history_.size();
}

std::vector<CompletionRequest> MockBackend::history() const {
  std::lock_guard lock(mu_);
  return history_;
}

std::size_t MockBackend::remaining(const std::string& fingerprint) const {
  std::lock_guard lock(mu_);
  auto it = scripts_.find(fingerprint);
  return it == scripts_.end() ? 0 : it->second.replies.size();
}

std::size_t MockBackend::remaining_fallback() const {
  std::lock_guard lock(mu_);
  return fallback_ ? fallback_->size() : 0;
}

}  // namespace codecot
