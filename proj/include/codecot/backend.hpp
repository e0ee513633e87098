#pragma once

// Chat-completion backends. Every agent call in the pipeline goes through
// Backend::complete; implementations are shareable across threads.

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "codecot/types.hpp"

namespace codecot {

enum class Role { system, user, assistant };
std::string to_string(Role);
Role role_from(const std::string&);

struct ChatMessage {
  Role role = Role::user;
  std::string content;
  bool operator==(const ChatMessage&) const = default;
};

struct SamplingParams {
  double temperature = 0.2;
  std::size_t max_tokens = 4096;
};

struct CompletionRequest {
  std::vector<ChatMessage> messages;
  double temperature = 0.2;
  std::size_t max_tokens = 4096;
  std::size_t n_samples = 1;
  std::optional<std::int64_t> seed;
  std::vector<std::string> stop;

  void validate() const;
};

struct Usage {
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
};

struct CompletionResponse {
  std::vector<std::string> samples;
  Usage usage;
  std::string backend_id;
  std::vector<bool> truncated_flags;
  std::size_t attempts = 1;  // transport attempts used, retries included
};

struct BackendPolicy {
  std::size_t max_concurrency = 4;
  std::size_t retry_limit = 3;  // retries after the first attempt
  std::vector<std::chrono::milliseconds> retry_backoff{std::chrono::milliseconds(500), std::chrono::milliseconds(2000),
                                                       std::chrono::milliseconds(8000)};
  std::chrono::milliseconds request_timeout{120000};

  void validate() const;
  /// Delay before retry number `retry` (1-based); the last entry repeats.
  std::chrono::milliseconds backoff_for(std::size_t retry) const;
};

enum class BackendErrorKind {
  invalid_request,
  transport,
  http_status,
  malformed_response,
  timeout,
  script_exhausted,
  unmatched_request,
};

std::string to_string(BackendErrorKind);

class BackendError : public std::runtime_error {
 public:
  BackendError(BackendErrorKind kind, const std::string& what, int status = 0, std::string body = {})
      : std::runtime_error(to_string(kind) + ": " + what), kind_(kind), status_(status), body_(std::move(body)) {}

  BackendErrorKind kind() const noexcept { return kind_; }
  int status() const noexcept { return status_; }
  const std::string& body() const noexcept { return body_; }
  /// Transport failures, timeouts, 429 and 5xx are worth retrying.
  bool transient() const noexcept;

 private:
  BackendErrorKind kind_;
  int status_;
  std::string body_;
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual CompletionResponse complete(const CompletionRequest& request) = 0;
  virtual std::string id() const = 0;
};

using BackendPtr = std::shared_ptr<Backend>;

/// Caps the number of in-flight calls and records the observed peak.
class AdmissionGate {
 public:
  explicit AdmissionGate(std::size_t capacity);

  class Ticket {
   public:
    explicit Ticket(AdmissionGate& gate) : gate_(&gate) { gate_->acquire(); }
    Ticket(const Ticket&) = delete;
    Ticket& operator=(const Ticket&) = delete;
    ~Ticket() { gate_->release(); }

   private:
    AdmissionGate* gate_;
  };

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t in_flight() const;
  std::size_t peak() const;

 private:
  void acquire();
  void release();

  std::size_t capacity_;
  std::size_t in_flight_ = 0;
  std::size_t peak_ = 0;
  mutable std::mutex mu_;
  std::condition_variable cv_;
};

/// Mock fingerprint: SHA-256 over the ordered message contents, temperature
/// and n_samples. Roles, max_tokens, seed and stop do not participate.
std::string request_fingerprint(const CompletionRequest& request);

/// Named backends shared by every stage.
class BackendRegistry {
 public:
  void add(BackendPtr backend);
  void add(const std::string& id, BackendPtr backend);
  BackendPtr get(const std::string& id) const;  // throws ValidationError for unknown ids
  bool contains(const std::string& id) const { return backends_.count(id) != 0; }

 private:
  std::map<std::string, BackendPtr> backends_;
};

}  // namespace codecot
