#include "codecot/http_backend.hpp"

#include <httplib.h>

#include <thread>

namespace codecot {

namespace {

std::string excerpt(const std::string& s, std::size_t max = 512) {
  return s.size() <= max ? s : s.substr(0, max) + "...";
}

}  // namespace

HttpBackend::HttpBackend(HttpBackendConfig config)
    : config_(std::move(config)), gate_(config_.policy.max_concurrency) {
  config_.policy.validate();
  if (config_.base_url.empty()) throw ValidationError("base_url_nonempty", "backend " + config_.id + " has no base_url");
}

std::string HttpBackend::build_body(const CompletionRequest& request, std::size_t n) const {
  Json messages = Json::array();
  for (const auto& m : request.messages) messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  Json body{{"model", config_.model},
            {"messages", std::move(messages)},
            {"temperature", request.temperature},
            {"max_tokens", request.max_tokens},
            {"n", n}};
  if (!request.stop.empty()) body["stop"] = request.stop;
  if (request.seed) body["seed"] = *request.seed;
  return body.dump();
}

CompletionResponse HttpBackend::complete(const CompletionRequest& request) {
  try {
    request.validate();
  } catch (const ValidationError& e) {
    throw BackendError(BackendErrorKind::invalid_request, e.what());
  }

  if (config_.supports_n || request.n_samples == 1) {
    return send_with_retry(build_body(request, request.n_samples), request.n_samples);
  }

  CompletionResponse merged;
  merged.backend_id = config_.id;
  merged.attempts = 0;
  const std::string body = build_body(request, 1);
  for (std::size_t i = 0; i < request.n_samples; ++i) {
    auto part = send_with_retry(body, 1);
    merged.samples.push_back(std::move(part.samples.front()));
    merged.truncated_flags.push_back(part.truncated_flags.front());
    merged.usage.prompt_tokens += part.usage.prompt_tokens;
    merged.usage.completion_tokens += part.usage.completion_tokens;
    merged.attempts += part.attempts;
  }
  return merged;
}

CompletionResponse HttpBackend::send_with_retry(const std::string& body, std::size_t n) {
  for (std::size_t attempt = 1;; ++attempt) {
    try {
      auto resp = send_once(body, n);
      resp.attempts = attempt;
      return resp;
    } catch (const BackendError& e) {
      if (!e.transient() || attempt > config_.policy.retry_limit) throw;
      std::this_thread::sleep_for(config_.policy.backoff_for(attempt));
    }
  }
}

CompletionResponse HttpBackend::send_once(const std::string& body, std::size_t n) {
  AdmissionGate::Ticket ticket(gate_);
  ++total_attempts_;

  httplib::Client client(config_.base_url);
  const auto timeout = config_.policy.request_timeout;
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  const auto start = std::chrono::steady_clock::now();
  auto result = client.Post(config_.path, headers, body, "application/json");
  if (!result) {
    const auto elapsed = std::chrono::steady_clock::now() - start;
    const auto err = result.error();
    if (err == httplib::Error::ConnectionTimeout || elapsed >= timeout) {
      throw BackendError(BackendErrorKind::timeout, "request to " + config_.base_url + " timed out");
    }
    throw BackendError(BackendErrorKind::transport, httplib::to_string(err));
  }
  if (result->status < 200 || result->status >= 300) {
    throw BackendError(BackendErrorKind::http_status,
                       "HTTP " + std::to_string(result->status) + ": " + excerpt(result->body), result->status,
                       result->body);
  }

  CompletionResponse out;
  out.backend_id = config_.id;
  try {
    const Json j = Json::parse(result->body);
    for (const auto& choice : j.at("choices")) {
      const auto& content = choice.at("message").at("content");
      out.samples.push_back(content.is_null() ? std::string() : content.get<std::string>());
      out.truncated_flags.push_back(choice.value("finish_reason", Json(nullptr)) == Json("length"));
    }
    if (auto u = j.find("usage"); u != j.end() && u->is_object()) {
      out.usage.prompt_tokens = u->value("prompt_tokens", std::size_t{0});
      out.usage.completion_tokens = u->value("completion_tokens", std::size_t{0});
    }
  } catch (const Json::exception& e) {
    throw BackendError(BackendErrorKind::malformed_response, e.what(), result->status, result->body);
  }
  if (out.samples.size() != n) {
    throw BackendError(BackendErrorKind::malformed_response,
                       "expected " + std::to_string(n) + " choices, got " + std::to_string(out.samples.size()),
                       result->status, result->body);
  }
  return out;
}

}  // namespace codecot
