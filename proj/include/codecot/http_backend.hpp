#pragma once

#include <atomic>
#include <string>

#include "codecot/backend.hpp"

namespace codecot {

struct HttpBackendConfig {
  std::string id = "http";
  std::string base_url;  // scheme://host[:port]
  std::string path = "/v1/chat/completions";
  std::string model;
  std::string api_key;  // sent as a bearer token when non-empty
  BackendPolicy policy;
  bool supports_n = true;  // false: fan out n single-sample requests
};

/// OpenAI-compatible chat-completions client with bounded concurrency and
/// retry on transient failures. Retries resend the identical request body.
class HttpBackend : public Backend {
 public:
  explicit HttpBackend(HttpBackendConfig config);

  CompletionResponse complete(const CompletionRequest& request) override;
  std::string id() const override { return config_.id; }

  const AdmissionGate& gate() const noexcept { return gate_; }
  std::size_t total_attempts() const noexcept { return total_attempts_.load(); }

  /// Request body for `request` with `n` samples.
  std::string build_body(const CompletionRequest& request, std::size_t n) const;

 private:
  CompletionResponse send_with_retry(const std::string& body, std::size_t n);
  CompletionResponse send_once(const std::string& body, std::size_t n);

  HttpBackendConfig config_;
  AdmissionGate gate_;
  std::atomic<std::size_t> total_attempts_{0};
};

}  // namespace codecot
