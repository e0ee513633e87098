#pragma once

// The `codecot` command line, as a library so tests can drive it in-process.

#include <iosfwd>
#include <string>
#include <vector>

namespace codecot::cli {

enum ExitCode : int {
  kOk = 0,
  kNotPassed = 1,     // verify: candidate did not pass
  kUsage = 2,         // bad flags, bad config, unreadable input
  kItemFailures = 3,  // some items failed on infrastructure; rerun with --resume
  kInterrupted = 130,
};

/// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Asks a running stage to stop after the items in flight. Safe from a
/// signal handler.
void request_stop() noexcept;
void reset_stop() noexcept;

}  // namespace codecot::cli
