"""Judge driver that runs one candidate program against one test.

The shim is the only process boundary between the evaluator and untrusted
generated code. It enforces a wall timeout, a best-effort memory ceiling,
and output caps, and always reports exactly one JSON document on its own
stdout. Candidate failure (crash, timeout, garbage output) is data in that
document, never a shim failure.
"""

from __future__ import annotations

import json
import os
import signal
import subprocess
import sys
import threading
import time
from dataclasses import asdict, dataclass

try:
    import resource
except ImportError:  # non-POSIX host: memory ceiling unenforced
    resource = None

PROTOCOL_VERSION = 1
TRUNCATION_MARKER = "\n...[output truncated]"

DEFAULT_TIMEOUT_S = 10.0
DEFAULT_MEM_MB = 1024
DEFAULT_MAX_OUTPUT_BYTES = 1 << 20


@dataclass
class ShimResult:
    stdout: str
    stderr: str
    exit_status: int
    timed_out: bool
    duration_ms: int
    protocol_version: int = PROTOCOL_VERSION
    stdout_truncated: bool = False
    stderr_truncated: bool = False
    memory_enforced: bool = False

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


class _BoundedReader(threading.Thread):
    """Drains a pipe fully but stores at most `limit` bytes."""

    def __init__(self, stream, limit: int):
        super().__init__(daemon=True)
        self._stream = stream
        self._limit = limit
        self._buffer = bytearray()
        self.truncated = False

    def run(self):
        try:
            while True:
                chunk = self._stream.read(65536)
                if not chunk:
                    break
                if len(self._buffer) < self._limit:
                    self._buffer.extend(chunk[: self._limit - len(self._buffer)])
                    if len(self._buffer) >= self._limit:
                        self.truncated = True
                else:
                    self.truncated = True
        except (OSError, ValueError):
            pass
        finally:
            try:
                self._stream.close()
            except OSError:
                pass

    def text(self) -> str:
        out = self._buffer.decode("utf-8", errors="replace")
        if self.truncated:
            out += TRUNCATION_MARKER
        return out


# Functional-mode driver, run as `python -c DRIVER program entry input`.
# Candidate prints are rerouted to stderr so the JSON-encoded return value
# is the only thing on stdout.
_FUNCTIONAL_DRIVER = r"""
import json, sys
prog, entry, inpath = sys.argv[1], sys.argv[2], sys.argv[3]
with open(prog, "r", encoding="utf-8") as fh:
    src = fh.read()
with open(inpath, "r", encoding="utf-8") as fh:
    raw = fh.read()
args = json.loads(raw) if raw.strip() else []
ns = {"__name__": "__candidate__"}
real_stdout = sys.stdout
sys.stdout = sys.stderr
try:
    exec(compile(src, prog, "exec"), ns)
    fn = ns.get(entry)
    if fn is None and isinstance(ns.get("Solution"), type):
        fn = getattr(ns["Solution"](), entry, None)
    if not callable(fn):
        raise NameError("entry point %r not found in candidate" % entry)
    value = fn(*args) if isinstance(args, list) else fn(args)
finally:
    sys.stdout = real_stdout
print(json.dumps(value))
"""


def _preexec(mem_bytes: int):
    def setup():
        os.setsid()
        if resource is not None and mem_bytes > 0:
            try:
                resource.setrlimit(resource.RLIMIT_AS, (mem_bytes, mem_bytes))
            except (ValueError, OSError):
                pass

    return setup


def run_one(
    mode: str,
    program: str,
    input_path: str,
    entry: str | None = None,
    timeout_s: float = DEFAULT_TIMEOUT_S,
    mem_mb: int = DEFAULT_MEM_MB,
    max_output_bytes: int = DEFAULT_MAX_OUTPUT_BYTES,
) -> ShimResult:
    """Execute one candidate against one test and return the structured result.

    stdio mode binds the test input to the candidate's standard input;
    functional mode loads the candidate, calls the entry point with the
    JSON-decoded argument list, and JSON-encodes the return value as stdout.
    """
    if mode not in ("stdio", "functional"):
        raise ValueError(f"unknown mode {mode!r}")
    if not os.path.isfile(program):
        raise FileNotFoundError(f"program file not found: {program}")
    if mode == "functional" and not entry:
        raise ValueError("functional mode requires an entry point name")

    if mode == "stdio":
        argv = [sys.executable, program]
        stdin = open(input_path, "rb")
    else:
        argv = [sys.executable, "-c", _FUNCTIONAL_DRIVER, program, entry, input_path]
        stdin = subprocess.DEVNULL

    posix = hasattr(os, "setsid") and resource is not None
    start = time.perf_counter()
    try:
        proc = subprocess.Popen(
            argv,
            stdin=stdin,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            preexec_fn=_preexec(mem_mb * 1024 * 1024) if posix else None,
        )
    finally:
        if stdin is not subprocess.DEVNULL:
            stdin.close()

    out_reader = _BoundedReader(proc.stdout, max_output_bytes)
    err_reader = _BoundedReader(proc.stderr, max_output_bytes)
    out_reader.start()
    err_reader.start()

    timed_out = False
    try:
        proc.wait(timeout=timeout_s)
    except subprocess.TimeoutExpired:
        timed_out = True
        _kill_hard(proc, posix)
        proc.wait()
    duration_ms = int(round((time.perf_counter() - start) * 1000))
    out_reader.join(timeout=5)
    err_reader.join(timeout=5)

    return ShimResult(
        stdout=out_reader.text(),
        stderr=err_reader.text(),
        exit_status=proc.returncode,
        timed_out=timed_out,
        duration_ms=duration_ms,
        stdout_truncated=out_reader.truncated,
        stderr_truncated=err_reader.truncated,
        memory_enforced=posix,
    )


def _kill_hard(proc: subprocess.Popen, posix: bool) -> None:
    try:
        if posix:
            os.killpg(os.getpgid(proc.pid), signal.SIGKILL)
        else:
            proc.kill()
    except (ProcessLookupError, PermissionError, OSError):
        pass
