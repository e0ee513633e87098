#pragma once

// Runs untrusted Python candidates through the sandbox shim, one subprocess
// per job, under host-side wall-clock and rlimit enforcement.

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "codecot/backend.hpp"
#include "codecot/types.hpp"

namespace codecot {

enum class NetworkPolicy { denied };

struct SandboxLimits {
  std::chrono::milliseconds wall_time{10000};
  std::chrono::milliseconds cpu_time{10000};
  std::size_t memory = std::size_t{512} << 20;
  std::size_t max_output = std::size_t{1} << 20;
  NetworkPolicy network = NetworkPolicy::denied;

  void validate() const;
};

void to_json(Json& j, const SandboxLimits& l);
void from_json(const Json& j, SandboxLimits& l);

/// The sandbox itself could not run (shim missing, spawn failure). Distinct
/// from a candidate failing inside a working sandbox.
class SandboxUnavailable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ShimMode { stdin_stdout, expression_assert, dry_parse, run_test_code };
std::string to_string(ShimMode);

struct ShimJob {
  ShimMode mode = ShimMode::stdin_stdout;
  std::string code;
  std::string input;
  std::string assertion;
  std::string test_code;
};

/// What came back from one shim process.
struct ShimResult {
  bool ok = false;
  std::string stdout_text;
  std::string stderr_excerpt;
  std::optional<std::string> exception_type;
  std::chrono::milliseconds elapsed{0};
  bool stdout_overflow = false;
  bool timed_out = false;        // host wall clock expired
  bool cpu_exceeded = false;     // killed by SIGXCPU
  int term_signal = 0;           // nonzero if the shim died from a signal
  bool protocol_error = false;   // no well-formed verdict + sentinel
  std::string protocol_detail;
};

struct SandboxConfig {
  std::string python = "python3";
  std::filesystem::path shim_path;  // empty: the bundled shim
  std::size_t pool_size = 4;
};

std::filesystem::path default_shim_path();

class SandboxExecutor {
 public:
  /// Throws SandboxUnavailable if the shim file does not exist.
  explicit SandboxExecutor(SandboxConfig config = {});

  ShimResult run_job(const ShimJob& job, const SandboxLimits& limits) const;

  /// Runs `code` against each test in a fresh subprocess, stopping at the
  /// first test that does not pass.
  Verdict run_candidate(const std::string& code, const std::vector<TestCase>& tests,
                        const SandboxLimits& limits) const;

  const SandboxConfig& config() const noexcept { return config_; }

  /// Process groups spawned so far, for orphan checks in tests.
  std::vector<int> spawned_process_groups() const;

 private:
  SandboxConfig config_;
  mutable AdmissionGate pool_;
  mutable std::mutex mu_;
  mutable std::vector<int> spawned_;
};

/// Line-wise comparison ignoring trailing whitespace on each line and
/// trailing blank lines.
bool outputs_match(const std::string& expected, const std::string& actual);

}  // namespace codecot
