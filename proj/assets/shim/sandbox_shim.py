#!/usr/bin/env python3
"""Runs one candidate job read from stdin and reports a single verdict line.

Job fields: mode, code, input, assertion, test_code, sentinel,
limits {cpu_time_ms, memory_bytes, max_output}.
The verdict line is followed by the job's sentinel on its own line.
"""

import contextlib
import io
import json
import os
import socket
import sys
import time
import traceback

MODES = ("stdin_stdout", "expression_assert", "dry_parse", "run_test_code")
STDERR_EXCERPT = 2000


class _CappedWriter(io.TextIOBase):
    def __init__(self, cap):
        self.cap = cap
        self.parts = []
        self.size = 0
        self.overflow = False

    def writable(self):
        return True

    def write(self, s):
        if self.size + len(s) > self.cap:
            keep = max(0, self.cap - self.size)
            self.parts.append(s[:keep])
            self.size = self.cap
            self.overflow = True
        else:
            self.parts.append(s)
            self.size += len(s)
        return len(s)

    def getvalue(self):
        return "".join(self.parts)


def _apply_limits(limits):
    try:
        import resource
    except ImportError:
        return
    cpu_ms = limits.get("cpu_time_ms")
    if cpu_ms:
        secs = max(1, int((cpu_ms + 999) // 1000))
        resource.setrlimit(resource.RLIMIT_CPU, (secs, secs + 1))
    mem = limits.get("memory_bytes")
    if mem:
        with contextlib.suppress(ValueError, OSError):
            resource.setrlimit(resource.RLIMIT_AS, (mem, mem))


def _deny_network():
    def refuse(*_args, **_kwargs):
        raise OSError("network access is disabled in the sandbox")

    socket.socket = refuse
    socket.create_connection = refuse


def _run(job, out, err):
    mode = job["mode"]
    code = job.get("code", "")
    if mode == "dry_parse":
        compile(code, "<candidate>", "exec")
        return
    compiled = compile(code, "<candidate>", "exec")
    ns = {"__name__": "__main__"}

    if mode == "stdin_stdout":
        sys.stdin = io.StringIO(job.get("input", ""))
        with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
            exec(compiled, ns)
        return

    if mode == "expression_assert":
        ns["__name__"] = "candidate"
        sys.stdin = io.StringIO("")
        with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
            exec(compiled, ns)
            exec(compile("assert " + job["assertion"], "<assertion>", "exec"), ns)
        return

    # run_test_code: generated tests see the candidate's definitions and a
    # run_main(stdin_text) helper that runs the candidate as a script.
    def run_main(stdin_text=""):
        buf = io.StringIO()
        saved = sys.stdin
        sys.stdin = io.StringIO(stdin_text)
        try:
            with contextlib.redirect_stdout(buf):
                exec(compiled, {"__name__": "__main__"})
        finally:
            sys.stdin = saved
        return buf.getvalue()

    ns["__name__"] = "candidate"
    sys.stdin = io.StringIO("")
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        try:
            exec(compiled, ns)
        except EOFError:
            # script-style candidates read stdin at import; tests drive them via run_main
            pass
        ns["run_main"] = run_main
        exec(compile(job["test_code"], "<tests>", "exec"), ns)


def main():
    raw = sys.stdin.read()
    # Keep the protocol channel on a private fd; fd 1 goes to /dev/null so
    # writes that bypass sys.stdout cannot corrupt it.
    proto = os.fdopen(os.dup(1), "w", encoding="utf-8")
    devnull = os.open(os.devnull, os.O_WRONLY)
    os.dup2(devnull, 1)
    sys.stdout = io.TextIOWrapper(io.FileIO(1, "w", closefd=False), encoding="utf-8")
    try:
        job = json.loads(raw)
        sentinel = job["sentinel"]
    except Exception:
        sys.stderr.write("shim: unreadable job\n")
        return 2
    if not isinstance(sentinel, str) or not sentinel or "\n" in sentinel:
        sys.stderr.write("shim: bad sentinel\n")
        return 2

    limits = job.get("limits") or {}
    cap = int(limits.get("max_output") or (1 << 20))
    out = _CappedWriter(cap)
    err = _CappedWriter(STDERR_EXCERPT)
    verdict = {"ok": True, "stdout": "", "stderr_excerpt": "", "exception_type": None, "elapsed_ms": 0}

    start = time.monotonic()
    if job.get("mode") not in MODES or not isinstance(job.get("code", ""), str) or \
            (job.get("mode") == "expression_assert" and not job.get("assertion")) or \
            (job.get("mode") == "run_test_code" and not job.get("test_code")):
        verdict.update(ok=False, exception_type="bad_job", stderr_excerpt="malformed job")
    else:
        _apply_limits(limits)
        _deny_network()
        try:
            _run(job, out, err)
        except SystemExit as e:
            if e.code not in (None, 0):
                verdict.update(ok=False, exception_type="SystemExit")
        except BaseException as e:  # noqa: BLE001 - every candidate failure is reported
            verdict.update(ok=False, exception_type=type(e).__name__)
            tb = traceback.format_exc()
            err.write(tb[-STDERR_EXCERPT:])
    verdict["elapsed_ms"] = int((time.monotonic() - start) * 1000)
    verdict["stdout"] = out.getvalue()
    verdict["stdout_overflow"] = out.overflow
    if not verdict["stderr_excerpt"]:
        verdict["stderr_excerpt"] = err.getvalue()[-STDERR_EXCERPT:]

    sys.stdin = sys.__stdin__
    proto.write(json.dumps(verdict) + "\n" + sentinel + "\n")
    proto.flush()
    return 0


if __name__ == "__main__":
    os._exit(main())
