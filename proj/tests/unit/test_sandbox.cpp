#include <doctest.h>

#include <signal.h>
#include <sys/wait.h>

#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <thread>

#include "../support/paths.hpp"
#include "codecot/json_io.hpp"
#include "codecot/sandbox.hpp"

using namespace codecot;
using namespace std::chrono_literals;

namespace {

const SandboxExecutor& sandbox() {
  static SandboxExecutor s{SandboxConfig{}};
  return s;
}

SandboxLimits quick_limits() {
  SandboxLimits l;
  l.wall_time = 5000ms;
  l.cpu_time = 5000ms;
  return l;
}

ShimJob job(ShimMode mode, std::string code) {
  ShimJob j;
  j.mode = mode;
  j.code = std::move(code);
  return j;
}

bool group_gone(int pgid) { return ::kill(-pgid, 0) == -1 && errno == ESRCH; }

std::string run_shim_raw(const Json& job_json, const testpaths::TempDir& tmp) {
  write_text_file(tmp / "job.json", job_json.dump());
  const std::string cmd = "python3 -I -S '" + default_shim_path().string() + "' < '" + (tmp / "job.json").string() +
                          "' > '" + (tmp / "out.txt").string() + "'";
  const int rc = std::system(cmd.c_str());
  CHECK(WEXITSTATUS(rc) == 0);
  return read_text_file(tmp / "out.txt");
}

}  // namespace

TEST_SUITE("sandbox") {

TEST_CASE("echo program passes its test") {
  auto v = sandbox().run_candidate("print(input())", {TestCase::io("hello\n", "hello\n")}, quick_limits());
  CHECK(v.status == VerdictStatus::passed);
  CHECK(v.tests_run == 1);
  CHECK(v.tests_passed == 1);
  CHECK(v.path == VerdictPath::direct);
}

TEST_CASE("mismatch captures expected and actual, stops at first failure") {
  auto v = sandbox().run_candidate("print(int(input()) * 2)",
                                   {TestCase::io("2\n", "4\n"), TestCase::io("3\n", "7\n"), TestCase::io("1\n", "2\n")},
                                   quick_limits());
  CHECK(v.status == VerdictStatus::failed);
  CHECK(v.tests_run == 2);
  CHECK(v.tests_passed == 1);
  REQUIRE(v.failures.size() == 1);
  CHECK(v.failures[0].test_index == 1);
  CHECK(v.failures[0].expected == "7\n");
  CHECK(v.failures[0].actual == "6\n");
}

TEST_CASE("trailing whitespace differences still pass") {
  CHECK(outputs_match("1 2\n3\n", "1 2  \n3\n\n\n"));
  CHECK_FALSE(outputs_match("1 2\n", "1  2\n"));
  auto v = sandbox().run_candidate("print('a ')\nprint()", {TestCase::io("", "a\n")}, quick_limits());
  CHECK(v.passed());
}

TEST_CASE("infinite loop under a 1 s wall limit times out within 2 s and leaves no orphans") {
  auto limits = quick_limits();
  limits.wall_time = 1000ms;
  const auto before = sandbox().spawned_process_groups().size();
  const auto start = std::chrono::steady_clock::now();
  auto v = sandbox().run_candidate(
      "import subprocess, sys\nsubprocess.Popen([sys.executable, '-c', 'import time; time.sleep(30)'])\n"
      "while True:\n    pass\n", {TestCase::io("", "")}, limits);
  const auto elapsed = std::chrono::steady_clock::now() - start;
  CHECK(v.status == VerdictStatus::timeout);
  CHECK(elapsed <= 2s);
  const auto groups = sandbox().spawned_process_groups();
  REQUIRE(groups.size() > before);
  for (auto g = groups.begin() + static_cast<long>(before); g != groups.end(); ++g) CHECK(group_gone(*g));
}

TEST_CASE("no orphan process groups after ordinary runs") {
  sandbox().run_candidate("print(1)", {TestCase::io("", "1\n")}, quick_limits());
  for (int g : sandbox().spawned_process_groups()) CHECK(group_gone(g));
}

TEST_CASE("stdout flood yields overflow and a single verdict") {
  auto limits = quick_limits();
  limits.max_output = 64 * 1024;
  auto v = sandbox().run_candidate("for _ in range(20000):\n    print('x' * 100)\n", {TestCase::io("", "")}, limits);
  CHECK(v.status == VerdictStatus::output_overflow);

  testpaths::TempDir tmp;
  const std::string sentinel = "@@END-7f3a9c@@";
  const auto out = run_shim_raw(Json{{"mode", "stdin_stdout"},
                                     {"code", "import os\nfor _ in range(50000):\n    print('y' * 200)\n"
                                              "    os.write(1, b'raw bypass\\n')\n"},
                                     {"input", ""},
                                     {"sentinel", sentinel},
                                     {"limits", {{"max_output", 4096}}}},
                                tmp);
  auto lines = read_jsonl_text(out);
  std::size_t verdicts = 0;
  std::size_t sentinels = 0;
  std::size_t pos = 0;
  while (pos < out.size()) {
    auto nl = out.find('\n', pos);
    const auto line = out.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
    if (line == sentinel) ++sentinels;
    if (!line.empty() && line.front() == '{') ++verdicts;
    pos = nl == std::string::npos ? out.size() : nl + 1;
  }
  CHECK(verdicts == 1);
  CHECK(sentinels == 1);
  CHECK(out.size() < 4096 + 8192);
  const auto verdict = Json::parse(out.substr(0, out.find('\n')));
  CHECK(verdict["stdout_overflow"] == true);
  CHECK(out.substr(out.size() - sentinel.size() - 1) == sentinel + "\n");
}

TEST_CASE("dry parse reports syntax errors") {
  auto ok = sandbox().run_job(job(ShimMode::dry_parse, "def f(x):\n    return x\n"), quick_limits());
  CHECK(ok.ok);
  CHECK_FALSE(ok.exception_type);
  auto bad = sandbox().run_job(job(ShimMode::dry_parse, "def f(x)\n    return x\n"), quick_limits());
  CHECK_FALSE(bad.ok);
  REQUIRE(bad.exception_type);
  CHECK(*bad.exception_type == "SyntaxError");
}

TEST_CASE("dry parse does not execute") {
  auto r = sandbox().run_job(job(ShimMode::dry_parse, "raise SystemExit(3)\n"), quick_limits());
  CHECK(r.ok);
}

TEST_CASE("expression assertions") {
  const std::string code = "def add(a, b):\n    return a + b\n";
  auto v = sandbox().run_candidate(code, {TestCase::expr("add(1, 2) == 3"), TestCase::expr("add(2, 2) == 5")},
                                   quick_limits());
  CHECK(v.status == VerdictStatus::failed);
  CHECK(v.tests_passed == 1);

  v = sandbox().run_candidate("def add(a, b):\n    return a / 0\n", {TestCase::expr("add(1, 2) == 3")}, quick_limits());
  CHECK(v.status == VerdictStatus::crashed);
}

TEST_CASE("runtime errors crash with the exception type") {
  auto v = sandbox().run_candidate("raise ValueError('boom')", {TestCase::io("", "")}, quick_limits());
  CHECK(v.status == VerdictStatus::crashed);
  CHECK(v.detail.find("ValueError") != std::string::npos);
}

TEST_CASE("network is refused") {
  auto v = sandbox().run_candidate(
      "import socket\ntry:\n    socket.socket()\n    print('open')\nexcept OSError:\n    print('denied')\n",
      {TestCase::io("", "denied\n")}, quick_limits());
  CHECK(v.passed());
}

TEST_CASE("memory limit stops large allocations") {
  auto limits = quick_limits();
  limits.memory = std::size_t{256} << 20;
  auto v = sandbox().run_candidate("x = bytearray(1 << 30)\nprint('allocated')\n", {TestCase::io("", "allocated\n")},
                                   limits);
  CHECK_FALSE(v.passed());
}

TEST_CASE("generated test code sees run_main") {
  ShimJob j = job(ShimMode::run_test_code, "print(int(input()) + 1)\n");
  j.test_code = "assert run_main('41\\n') == '42\\n'\n";
  auto r = sandbox().run_job(j, quick_limits());
  CHECK(r.ok);
  j.test_code = "assert run_main('1\\n') == '3\\n'\n";
  r = sandbox().run_job(j, quick_limits());
  CHECK_FALSE(r.ok);
  REQUIRE(r.exception_type);
  CHECK(*r.exception_type == "AssertionError");
}

TEST_CASE("missing shim or interpreter is a sandbox failure, not a verdict") {
  SandboxConfig c;
  c.shim_path = "/nonexistent/shim.py";
  CHECK_THROWS_AS(SandboxExecutor{c}, SandboxUnavailable);

  SandboxConfig p;
  p.python = "/nonexistent/python3";
  SandboxExecutor s(p);
  CHECK_THROWS_AS(s.run_candidate("print(1)", {TestCase::io("", "1\n")}, quick_limits()), SandboxUnavailable);
}

TEST_CASE("no tests is a failure") {
  auto v = sandbox().run_candidate("print(1)", {}, quick_limits());
  CHECK(v.status == VerdictStatus::failed);
}

TEST_CASE("limits validate and serialize") {
  SandboxLimits l;
  Json j = l;
  CHECK(j["wall_time_ms"] == 10000);
  CHECK(j["network"] == "denied");
  CHECK(j.get<SandboxLimits>().memory == l.memory);
  l.wall_time = 0ms;
  CHECK_THROWS_AS(l.validate(), ValidationError);
}

}
