#include "codecot/sandbox.hpp"

#include <fcntl.h>
#include <poll.h>
#include <sched.h>
#include <signal.h>
#include <sys/prctl.h>
#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <spdlog/spdlog.h>

#include <cerrno>
#include <cstring>
#include <random>
#include <sstream>

namespace codecot {

namespace {

using Clock = std::chrono::steady_clock;
constexpr std::size_t kStderrCap = 64 * 1024;
constexpr std::size_t kExcerpt = 2000;

std::string random_sentinel() {
  std::random_device rd;
  std::ostringstream out;
  out << "CODECOT-END-" << std::hex;
  for (int i = 0; i < 4; ++i) out << rd();
  return out.str();
}

void set_nonblocking(int fd) { fcntl(fd, F_SETFL, fcntl(fd, F_GETFL) | O_NONBLOCK); }

struct Pipe {
  int fd[2] = {-1, -1};
  Pipe() {
    if (pipe2(fd, O_CLOEXEC) != 0) throw SandboxUnavailable(std::string("pipe: ") + std::strerror(errno));
  }
  ~Pipe() {
    close_read();
    close_write();
  }
  void close_read() {
    if (fd[0] >= 0) ::close(fd[0]);
    fd[0] = -1;
  }
  void close_write() {
    if (fd[1] >= 0) ::close(fd[1]);
    fd[1] = -1;
  }
};

std::vector<std::string> rstrip_lines(const std::string& s) {
  std::vector<std::string> lines;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur)) {
    auto end = cur.find_last_not_of(" \t\r\f\v");
    lines.push_back(end == std::string::npos ? std::string() : cur.substr(0, end + 1));
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

std::string tail(const std::string& s, std::size_t n) { return s.size() <= n ? s : s.substr(s.size() - n); }

}  // namespace

void SandboxLimits::validate() const {
  if (wall_time.count() <= 0) throw ValidationError("limits_positive", "wall_time must be > 0");
  if (cpu_time.count() <= 0) throw ValidationError("limits_positive", "cpu_time must be > 0");
  if (memory == 0) throw ValidationError("limits_positive", "memory must be > 0");
  if (max_output == 0) throw ValidationError("limits_positive", "max_output must be > 0");
}

void to_json(Json& j, const SandboxLimits& l) {
  j = Json{{"wall_time_ms", l.wall_time.count()},
           {"cpu_time_ms", l.cpu_time.count()},
           {"memory_bytes", l.memory},
           {"max_output", l.max_output},
           {"network", "denied"}};
}

void from_json(const Json& j, SandboxLimits& l) {
  l = SandboxLimits{};
  l.wall_time = std::chrono::milliseconds(j.value("wall_time_ms", l.wall_time.count()));
  l.cpu_time = std::chrono::milliseconds(j.value("cpu_time_ms", l.cpu_time.count()));
  l.memory = j.value("memory_bytes", l.memory);
  l.max_output = j.value("max_output", l.max_output);
  if (j.value("network", std::string("denied")) != "denied") {
    throw ValidationError("network_denied", "sandbox network access cannot be enabled");
  }
  l.validate();
}

std::string to_string(ShimMode m) {
  switch (m) {
    case ShimMode::stdin_stdout: return "stdin_stdout";
    case ShimMode::expression_assert: return "expression_assert";
    case ShimMode::dry_parse: return "dry_parse";
    case ShimMode::run_test_code: return "run_test_code";
  }
  return "?";
}

std::filesystem::path default_shim_path() {
  if (const char* env = std::getenv("CODECOT_SHIM")) return env;
#ifdef CODECOT_DEFAULT_SHIM
  return CODECOT_DEFAULT_SHIM;
#else
  return "sandbox_shim.py";
#endif
}

bool outputs_match(const std::string& expected, const std::string& actual) {
  return rstrip_lines(expected) == rstrip_lines(actual);
}

SandboxExecutor::SandboxExecutor(SandboxConfig config) : config_(std::move(config)), pool_(config_.pool_size) {
  if (config_.shim_path.empty()) config_.shim_path = default_shim_path();
  if (!std::filesystem::is_regular_file(config_.shim_path)) {
    throw SandboxUnavailable("sandbox shim not found at " + config_.shim_path.string());
  }
  if (config_.pool_size == 0) throw ValidationError("pool_size_positive", "sandbox pool_size must be >= 1");
  // Descendants that outlive the shim are reparented here and reaped with their group.
  ::prctl(PR_SET_CHILD_SUBREAPER, 1);
}

std::vector<int> SandboxExecutor::spawned_process_groups() const {
  std::lock_guard lock(mu_);
  return spawned_;
}

ShimResult SandboxExecutor::run_job(const ShimJob& job, const SandboxLimits& limits) const {
  limits.validate();
  AdmissionGate::Ticket ticket(pool_);

  const std::string sentinel = random_sentinel();
  Json payload{{"mode", to_string(job.mode)},
               {"code", job.code},
               {"input", job.input},
               {"sentinel", sentinel},
               {"limits",
                {{"cpu_time_ms", limits.cpu_time.count()},
                 {"memory_bytes", limits.memory},
                 {"max_output", limits.max_output}}}};
  if (job.mode == ShimMode::expression_assert) payload["assertion"] = job.assertion;
  if (job.mode == ShimMode::run_test_code) payload["test_code"] = job.test_code;
  const std::string request = payload.dump(-1, ' ', false, Json::error_handler_t::replace);

  // Everything the child touches is prepared before fork.
  const std::string shim = config_.shim_path.string();
  std::vector<std::string> args{config_.python, "-I", "-S", shim};
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);
  std::vector<std::string> env_store{"PATH=/usr/local/bin:/usr/bin:/bin", "PYTHONHASHSEED=0",
                                     "PYTHONDONTWRITEBYTECODE=1", "PYTHONIOENCODING=utf-8", "LC_ALL=C.UTF-8",
                                     "HOME=/tmp"};
  std::vector<char*> envp;
  for (auto& e : env_store) envp.push_back(e.data());
  envp.push_back(nullptr);
  const rlim_t cpu_secs = static_cast<rlim_t>((limits.cpu_time.count() + 999) / 1000 + 1);

  Pipe in, out, err;
  const pid_t pid = fork();
  if (pid < 0) throw SandboxUnavailable(std::string("fork: ") + std::strerror(errno));
  if (pid == 0) {
    setsid();
    dup2(in.fd[0], STDIN_FILENO);
    dup2(out.fd[1], STDOUT_FILENO);
    dup2(err.fd[1], STDERR_FILENO);
    rlimit core{0, 0};
    setrlimit(RLIMIT_CORE, &core);
    rlimit cpu{cpu_secs, cpu_secs + 1};
    setrlimit(RLIMIT_CPU, &cpu);
    unshare(CLONE_NEWNET);  // best effort; unprivileged callers fall back to the shim's socket guard
    execvpe(argv[0], argv.data(), envp.data());
    _exit(127);
  }
  {
    std::lock_guard lock(mu_);
    spawned_.push_back(pid);
  }
  in.close_read();
  out.close_write();
  err.close_write();
  set_nonblocking(in.fd[1]);
  set_nonblocking(out.fd[0]);
  set_nonblocking(err.fd[0]);

  // JSON escaping can expand output up to six-fold.
  const std::size_t stdout_cap = limits.max_output * 6 + 64 * 1024;
  std::string out_buf, err_buf;
  std::size_t written = 0;
  bool host_overflow = false;
  bool timed_out = false;
  const auto start = Clock::now();
  const auto deadline = start + limits.wall_time;
  char chunk[65536];

  while (out.fd[0] >= 0 || err.fd[0] >= 0) {
    const auto now = Clock::now();
    if (now >= deadline) {
      timed_out = true;
      break;
    }
    std::vector<pollfd> fds;
    if (in.fd[1] >= 0) fds.push_back({in.fd[1], POLLOUT, 0});
    if (out.fd[0] >= 0) fds.push_back({out.fd[0], POLLIN, 0});
    if (err.fd[0] >= 0) fds.push_back({err.fd[0], POLLIN, 0});
    const auto wait = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count() + 1;
    const int rc = poll(fds.data(), fds.size(), static_cast<int>(wait));
    if (rc < 0 && errno != EINTR) break;
    for (const auto& p : fds) {
      if (!p.revents) continue;
      if (p.fd == in.fd[1]) {
        const ssize_t n = ::write(in.fd[1], request.data() + written, request.size() - written);
        if (n > 0) written += static_cast<std::size_t>(n);
        if (n < 0 && errno != EAGAIN) written = request.size();
        if (written >= request.size()) in.close_write();
        continue;
      }
      const bool is_out = p.fd == out.fd[0];
      const ssize_t n = ::read(p.fd, chunk, sizeof chunk);
      if (n > 0) {
        auto& buf = is_out ? out_buf : err_buf;
        buf.append(chunk, static_cast<std::size_t>(n));
        if (!is_out && err_buf.size() > kStderrCap) err_buf.erase(0, err_buf.size() - kStderrCap);
      } else if (n == 0 || errno != EAGAIN) {
        (is_out ? out : err).close_read();
      }
    }
    if (out_buf.size() > stdout_cap) {
      host_overflow = true;
      break;
    }
  }

  // The whole process group goes, whatever happened.
  kill(-pid, SIGKILL);
  int status = 0;
  while (waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  for (int ignored = 0;;) {
    if (waitpid(-pid, &ignored, 0) < 0 && errno != EINTR) break;
  }

  ShimResult r;
  r.elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start);
  r.timed_out = timed_out;
  if (WIFSIGNALED(status) && !timed_out && !host_overflow) {
    r.term_signal = WTERMSIG(status);
    r.cpu_exceeded = r.term_signal == SIGXCPU;
  }
  if (host_overflow) {
    r.stdout_overflow = true;
    r.protocol_error = true;
    r.protocol_detail = "shim output exceeded host cap";
    return r;
  }
  if (timed_out) return r;
  if (WIFEXITED(status) && WEXITSTATUS(status) == 127 && out_buf.empty()) {
    throw SandboxUnavailable("could not execute " + config_.python + ": " + tail(err_buf, kExcerpt));
  }

  const std::string suffix = "\n" + sentinel + "\n";
  if (out_buf.size() < suffix.size() || out_buf.compare(out_buf.size() - suffix.size(), suffix.size(), suffix) != 0) {
    r.protocol_error = true;
    r.protocol_detail = "missing sentinel";
    r.stderr_excerpt = tail(err_buf, kExcerpt);
    return r;
  }
  const std::string line = out_buf.substr(0, out_buf.size() - suffix.size());
  if (line.find('\n') != std::string::npos) {
    r.protocol_error = true;
    r.protocol_detail = "more than one verdict line";
    return r;
  }
  try {
    const Json v = Json::parse(line);
    r.ok = v.at("ok").get<bool>();
    r.stdout_text = v.value("stdout", std::string());
    r.stderr_excerpt = v.value("stderr_excerpt", std::string());
    if (auto it = v.find("exception_type"); it != v.end() && it->is_string()) r.exception_type = it->get<std::string>();
    r.stdout_overflow = v.value("stdout_overflow", false);
  } catch (const Json::exception& e) {
    r.protocol_error = true;
    r.protocol_detail = std::string("bad verdict line: ") + e.what();
  }
  if (WIFEXITED(status) && WEXITSTATUS(status) != 0) {
    r.protocol_error = true;
    r.protocol_detail = "shim exited with status " + std::to_string(WEXITSTATUS(status));
  }
  return r;
}

Verdict SandboxExecutor::run_candidate(const std::string& code, const std::vector<TestCase>& tests,
                                       const SandboxLimits& limits) const {
  limits.validate();
  Verdict v;
  v.path = VerdictPath::direct;
  const auto start = Clock::now();

  for (std::size_t i = 0; i < tests.size(); ++i) {
    const auto& t = tests[i];
    ShimJob job;
    job.code = code;
    if (t.kind == TestKind::stdin_stdout) {
      job.mode = ShimMode::stdin_stdout;
      job.input = t.input;
    } else {
      job.mode = ShimMode::expression_assert;
      job.assertion = t.assertion.value_or("");
    }
    const auto r = run_job(job, limits);
    ++v.tests_run;

    std::optional<VerdictStatus> bad;
    TestFailure f{i, t.kind == TestKind::stdin_stdout ? t.expected_output : t.assertion.value_or(""),
                  tail(r.stdout_text, kExcerpt), tail(r.stderr_excerpt, kExcerpt)};
    if (r.timed_out || r.cpu_exceeded) {
      bad = VerdictStatus::timeout;
      v.detail = r.cpu_exceeded ? "cpu time limit exceeded" : "wall time limit exceeded";
    } else if (r.stdout_overflow) {
      bad = VerdictStatus::output_overflow;
      v.detail = "output exceeded " + std::to_string(limits.max_output) + " bytes";
    } else if (r.protocol_error || r.term_signal) {
      bad = VerdictStatus::crashed;
      v.detail = r.term_signal ? "killed by signal " + std::to_string(r.term_signal) : r.protocol_detail;
    } else if (!r.ok) {
      const bool assertion_failed =
          t.kind == TestKind::expression_assert && r.exception_type.value_or("") == "AssertionError";
      bad = assertion_failed ? VerdictStatus::failed : VerdictStatus::crashed;
      v.detail = r.exception_type.value_or("error");
    } else if (t.kind == TestKind::stdin_stdout && !outputs_match(t.expected_output, r.stdout_text)) {
      bad = VerdictStatus::failed;
      v.detail.clear();
    }

    if (bad) {
      v.status = *bad;
      v.failures.push_back(std::move(f));
      break;
    }
    ++v.tests_passed;
  }

  v.duration = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - start);
  if (v.failures.empty()) {
    if (v.tests_run == 0) {
      v.status = VerdictStatus::failed;
      v.detail = "no tests to run";
    } else {
      v.status = VerdictStatus::passed;
    }
  }
  return v;
}

}  // namespace codecot
