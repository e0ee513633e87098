#pragma once

#include <deque>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "codecot/backend.hpp"

namespace codecot {

/// Deterministic scripted backend.
///
/// Replies are addressed by request fingerprint and consumed in FIFO order,
/// one per requested sample. A request whose fingerprint has no script falls
/// back to the `*` queue when one was configured; otherwise it fails with
/// `unmatched_request` naming the nearest scripted key. Running out of
/// replies is always an error, never a silent reuse.
class MockBackend : public Backend {
 public:
  explicit MockBackend(std::string id = "mock") : id_(std::move(id)) {}

  void script(const std::string& fingerprint, std::vector<std::string> replies);
  void script(const CompletionRequest& request, std::vector<std::string> replies);
  void script_fallback(std::vector<std::string> replies);

  /// JSONL lines of {"key": <fingerprint or "*">, "replies": [...]} or
  /// {"request": {"messages": [...], "temperature": t, "n_samples": n}, "replies": [...]}.
  void load_fixture(const std::filesystem::path& path);
  void load_fixture_text(const std::string& text);

  CompletionResponse complete(const CompletionRequest& request) override;
  std::string id() const override { return id_; }

  std::size_t calls() const;
  std::vector<CompletionRequest> history() const;
  std::size_t remaining(const std::string& fingerprint) const;
  std::size_t remaining_fallback() const;

 private:
  struct Script {
    std::deque<std::string> replies;
    std::string preview;  // joined message contents when known
  };

  std::string nearest_key(const CompletionRequest& request, const std::string& fingerprint) const;

  std::string id_;
  std::map<std::string, Script> scripts_;
  std::optional<std::deque<std::string>> fallback_;
  std::vector<CompletionRequest> history_;
  mutable std::mutex mu_;
};

}  // namespace codecot
