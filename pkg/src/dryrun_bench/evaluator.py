"""Execute candidate programs against test suites and classify the outcome.

Each test runs in a fresh child process through the solution-runner shim
(separate package, invoked as a CLI; default `python -m solution_shim`).
Expected outputs never cross the shim boundary: the shim sees the program
and the test input only.
"""

from __future__ import annotations

import json
import logging
import os
import subprocess
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .corpus import TestCase

logger = logging.getLogger(__name__)

STATUSES = ("pass", "wrong_output", "runtime_error", "timeout", "output_overflow")
SOLVE_STATUSES = ("solved", "overconfident", "failed_public", "no_code")

DEFAULT_SHIM_CMD = (sys.executable, "-m", "solution_shim")


class EvaluatorError(Exception):
    """Infrastructure failure: shim launch or wire-protocol violation."""


@dataclass(frozen=True)
class ExecutionLimits:
    wall_timeout_s: float = 10.0
    memory_limit_mb: int = 1024
    max_output_bytes: int = 1 << 20

    def __post_init__(self):
        if self.wall_timeout_s <= 0 or self.memory_limit_mb <= 0 or self.max_output_bytes <= 0:
            raise ValueError("all execution limits must be positive")


@dataclass(frozen=True)
class TestOutcome:
    test_index: int
    visibility: str
    status: str
    actual_output: str
    duration_ms: int

    def to_dict(self) -> dict:
        # duration_ms intentionally omitted: persisted eval artifacts must be
        # byte-identical across replays.
        return {
            "test_index": self.test_index,
            "visibility": self.visibility,
            "status": self.status,
            "actual_output": self.actual_output,
        }


@dataclass
class EvalResult:
    outcomes: list[TestOutcome] = field(default_factory=list)

    def _all_pass(self, visibility: str) -> bool:
        return all(o.status == "pass" for o in self.outcomes if o.visibility == visibility)

    @property
    def public_pass(self) -> bool:
        return self._all_pass("public")

    @property
    def private_pass(self) -> bool:
        return self._all_pass("private")

    def to_dict(self) -> dict:
        return {
            "outcomes": [o.to_dict() for o in self.outcomes],
            "public_pass": self.public_pass,
            "private_pass": self.private_pass,
        }


def compare_output(actual: str, expected: str) -> bool:
    """Judge-convention comparison: LF-normalized, per-line trailing whitespace
    stripped, trailing empty lines dropped."""

    def canon(text: str) -> list[str]:
        lines = [line.rstrip() for line in text.replace("\r\n", "\n").replace("\r", "\n").split("\n")]
        while lines and lines[-1] == "":
            lines.pop()
        return lines

    return canon(actual) == canon(expected)


def classify(result: Optional[EvalResult], has_code: bool = True) -> str:
    if not has_code or result is None:
        return "no_code"
    if not result.public_pass:
        return "failed_public"
    if result.private_pass:
        return "solved"
    return "overconfident"


class SandboxEvaluator:
    """Runs one candidate against a test suite, one shim child per test."""

    def __init__(
        self,
        limits: ExecutionLimits = ExecutionLimits(),
        workers: Optional[int] = None,
        shim_cmd: Optional[Sequence[str]] = None,
    ):
        self.limits = limits
        self.workers = workers or os.cpu_count() or 1
        self.shim_cmd = tuple(shim_cmd) if shim_cmd else DEFAULT_SHIM_CMD

    def evaluate(
        self,
        code: str,
        tests: Sequence[TestCase],
        mode: str = "stdio",
        entry_point: Optional[str] = None,
    ) -> EvalResult:
        if not code.strip():
            raise ValueError("empty candidate code")
        if mode == "functional" and not entry_point:
            raise ValueError("functional mode requires an entry_point")

        with tempfile.TemporaryDirectory(prefix="dryrun-eval-") as tmp:
            program = Path(tmp) / "candidate.py"
            program.write_text(code, encoding="utf-8")
            input_files = []
            for i, test in enumerate(tests):
                path = Path(tmp) / f"input_{i}.txt"
                path.write_text(test.input, encoding="utf-8")
                input_files.append(path)

            def run(idx: int) -> TestOutcome:
                return self._run_one(program, input_files[idx], tests[idx], idx, mode, entry_point)

            if len(tests) <= 1 or self.workers == 1:
                outcomes = [run(i) for i in range(len(tests))]
            else:
                with ThreadPoolExecutor(max_workers=self.workers) as pool:
                    outcomes = list(pool.map(run, range(len(tests))))
        return EvalResult(outcomes=outcomes)

    def _run_one(
        self,
        program: Path,
        input_file: Path,
        test: TestCase,
        index: int,
        mode: str,
        entry_point: Optional[str],
    ) -> TestOutcome:
        cmd = [
            *self.shim_cmd,
            mode,
            str(program),
            str(input_file),
            "--timeout",
            str(self.limits.wall_timeout_s),
            "--mem",
            str(self.limits.memory_limit_mb),
            "--max-output-bytes",
            str(self.limits.max_output_bytes),
        ]
        if entry_point:
            cmd += ["--entry", entry_point]

        try:
            proc = subprocess.run(
                cmd,
                capture_output=True,
                text=True,
                timeout=self.limits.wall_timeout_s + 30,
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise EvaluatorError(f"shim launch failure: {exc}") from exc
        if proc.returncode != 0:
            raise EvaluatorError(f"shim internal failure (exit {proc.returncode}): {proc.stderr[:500]}")
        try:
            reply = json.loads(proc.stdout)
        except json.JSONDecodeError as exc:
            raise EvaluatorError(f"shim protocol violation, non-JSON reply: {proc.stdout[:200]!r}") from exc

        stdout = str(reply.get("stdout", ""))[: self.limits.max_output_bytes]
        duration_ms = int(reply.get("duration_ms", 0))
        if reply.get("timed_out"):
            status = "timeout"
        elif reply.get("stdout_truncated"):
            status = "output_overflow"
        elif int(reply.get("exit_status", 0)) != 0:
            status = "runtime_error"
        elif compare_output(stdout, test.expected_output):
            status = "pass"
        else:
            status = "wrong_output"
        return TestOutcome(
            test_index=index,
            visibility=test.visibility,
            status=status,
            actual_output=stdout,
            duration_ms=duration_ms,
        )
