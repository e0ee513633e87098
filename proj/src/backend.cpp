#include "codecot/backend.hpp"

#include <sstream>

#include "codecot/json_io.hpp"

namespace codecot {

std::string to_string(Role r) {
  switch (r) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "?";
}

Role role_from(const std::string& s) {
  if (s == "system") return Role::system;
  if (s == "user") return Role::user;
  if (s == "assistant") return Role::assistant;
  throw ValidationError("unknown_role", "'" + s + "'");
}

std::string to_string(BackendErrorKind k) {
  switch (k) {
    case BackendErrorKind::invalid_request: return "invalid_request";
    case BackendErrorKind::transport: return "transport";
    case BackendErrorKind::http_status: return "http_status";
    case BackendErrorKind::malformed_response: return "malformed_response";
    case BackendErrorKind::timeout: return "timeout";
    case BackendErrorKind::script_exhausted: return "script_exhausted";
    case BackendErrorKind::unmatched_request: return "unmatched_request";
  }
  return "?";
}

bool BackendError::transient() const noexcept {
  switch (kind_) {
    case BackendErrorKind::transport:
    case BackendErrorKind::timeout: return true;
    case BackendErrorKind::http_status: return status_ == 429 || status_ >= 500;
    default: return false;
  }
}

void CompletionRequest::validate() const {
  if (messages.empty()) throw ValidationError("messages_nonempty", "completion request has no messages");
  if (messages.front().role == Role::assistant) {
    throw ValidationError("first_message_role", "first message must be system or user");
  }
  if (temperature < 0.0) throw ValidationError("temperature_nonnegative", "temperature < 0");
  if (n_samples < 1) throw ValidationError("n_samples_positive", "n_samples must be >= 1");
}

void BackendPolicy::validate() const {
  if (max_concurrency < 1) throw ValidationError("max_concurrency_positive", "max_concurrency must be >= 1");
}

std::chrono::milliseconds BackendPolicy::backoff_for(std::size_t retry) const {
  if (retry_backoff.empty() || retry == 0) return std::chrono::milliseconds(0);
  return retry_backoff[std::min(retry, retry_backoff.size()) - 1];
}

AdmissionGate::AdmissionGate(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ < 1) throw ValidationError("max_concurrency_positive", "admission capacity must be >= 1");
}

void AdmissionGate::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return in_flight_ < capacity_; });
  ++in_flight_;
  peak_ = std::max(peak_, in_flight_);
}

void AdmissionGate::release() {
  {
    std::lock_guard lock(mu_);
    --in_flight_;
  }
  cv_.notify_one();
}

std::size_t AdmissionGate::in_flight() const {
  std::lock_guard lock(mu_);
  return in_flight_;
}

std::size_t AdmissionGate::peak() const {
  std::lock_guard lock(mu_);
  return peak_;
}

std::string request_fingerprint(const CompletionRequest& request) {
  Json contents = Json::array();
  for (const auto& m : request.messages) contents.push_back(m.content);
  // Fixed formatting of the temperature keeps keys stable across platforms.
  std::ostringstream temp;
  temp.precision(6);
  temp << std::fixed << request.temperature;
  Json key{{"messages", contents}, {"temperature", temp.str()}, {"n_samples", request.n_samples}};
  return sha256_hex(key.dump());
}

void BackendRegistry::add(BackendPtr backend) {
  auto id = backend->id();
  add(id, std::move(backend));
}

void BackendRegistry::add(const std::string& id, BackendPtr backend) { backends_[id] = std::move(backend); }

BackendPtr BackendRegistry::get(const std::string& id) const {
  auto it = backends_.find(id);
  if (it == backends_.end()) throw ValidationError("unknown_backend", "no backend with id '" + id + "'");
  return it->second;
}

}  // namespace codecot
