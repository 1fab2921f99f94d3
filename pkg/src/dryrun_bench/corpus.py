"""Benchmark corpus loading, date/difficulty filtering, and zero-example standardization.

Corpus files are JSON lines, one problem per line:

    {"id": ..., "title": ..., "statement": ..., "difficulty": "easy|medium|hard",
     "release_date": "YYYY-MM-DD", "public_tests": [{"input": ..., "output": ...}],
     "private_tests": [...], "mode": "stdio|functional", "entry_point"?: ...,
     "starter_code"?: ...}

Standardized specs are persisted beside the corpus as JSON lines of
{id, standardized_statement, io_format_note, redaction_findings}.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .prompts import load_template

logger = logging.getLogger(__name__)

DIFFICULTIES = ("easy", "medium", "hard")
EXECUTION_MODES = ("stdio", "functional")

# Test-leak strings shorter than this are skipped by the verbatim scan;
# single characters match essentially any prose.
MIN_LEAK_LEN = 3


class CorpusError(Exception):
    """Raised for unreadable or malformed corpus files."""


class StandardizeError(Exception):
    """Model output for a standardization request was empty or unparsable."""

    def __init__(self, message: str, raw_response: str = ""):
        super().__init__(message)
        self.raw_response = raw_response


class RedactionLeakError(Exception):
    """The mechanical verifier found residual examples in a standardized statement."""

    def __init__(self, spec: "ProblemSpec", report: "RedactionReport"):
        spans = ", ".join(f"{f.pattern}@{f.start}:{f.end}" for f in report.findings)
        super().__init__(f"redaction verifier found {len(report.findings)} finding(s): {spans}")
        self.spec = spec
        self.report = report


@dataclass(frozen=True)
class TestCase:
    input: str
    expected_output: str
    visibility: str  # "public" | "private"


@dataclass(frozen=True)
class RawProblem:
    id: str
    title: str
    statement: str
    difficulty: str
    release_date: Optional[date]
    public_tests: tuple[TestCase, ...]
    private_tests: tuple[TestCase, ...]
    execution_mode: str = "stdio"
    entry_point: Optional[str] = None
    starter_code: Optional[str] = None

    @property
    def all_tests(self) -> tuple[TestCase, ...]:
        return self.public_tests + self.private_tests


@dataclass(frozen=True)
class CorpusFilter:
    min_release_date: Optional[date] = None
    difficulties: frozenset[str] = frozenset()  # empty set means "all"
    id_allowlist: Optional[frozenset[str]] = None

    def admits(self, problem: RawProblem) -> bool:
        if self.min_release_date is not None:
            # Problems without a release date are excluded under any date filter.
            if problem.release_date is None or problem.release_date <= self.min_release_date:
                return False
        if self.difficulties and problem.difficulty not in self.difficulties:
            return False
        if self.id_allowlist is not None and problem.id not in self.id_allowlist:
            return False
        return True


@dataclass
class ProblemSpec:
    """A standardized, zero-example problem specification."""

    source: RawProblem
    standardized_statement: str
    io_format_note: str
    redaction_verified: bool


@dataclass(frozen=True)
class RedactionFinding:
    start: int
    end: int
    pattern: str
    matched_text: str

    def to_dict(self) -> dict:
        return {
            "start": self.start,
            "end": self.end,
            "pattern": self.pattern,
            "matched_text": self.matched_text,
        }


@dataclass
class RedactionReport:
    findings: list[RedactionFinding] = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not self.findings

    def __len__(self) -> int:
        return len(self.findings)


# ---------------------------------------------------------------------------
# Corpus loading
# ---------------------------------------------------------------------------


def _parse_tests(raw: object, visibility: str, index: int, fieldname: str) -> tuple[TestCase, ...]:
    if raw is None:
        return ()
    if not isinstance(raw, list):
        raise CorpusError(f"record {index}: field {fieldname!r} must be a list")
    tests = []
    for j, entry in enumerate(raw):
        if not isinstance(entry, dict) or "input" not in entry or "output" not in entry:
            raise CorpusError(
                f"record {index}: field {fieldname}[{j}] must be an object with input/output"
            )
        expected = str(entry["output"])
        if not expected:
            raise CorpusError(f"record {index}: field {fieldname}[{j}].output is empty")
        tests.append(TestCase(input=str(entry["input"]), expected_output=expected, visibility=visibility))
    return tuple(tests)


def _parse_record(obj: dict, index: int) -> Optional[RawProblem]:
    for name in ("id", "statement", "difficulty"):
        if name not in obj:
            raise CorpusError(f"record {index}: missing field {name!r}")
    if obj.get("checker"):
        # Checker-judged problems (non-unique answers) are out of scope.
        logger.warning("record %d (%s): checker-based judging, skipped", index, obj["id"])
        return None
    difficulty = str(obj["difficulty"])
    if difficulty not in DIFFICULTIES:
        raise CorpusError(f"record {index}: field 'difficulty' has unknown value {difficulty!r}")
    mode = str(obj.get("mode", "stdio"))
    if mode not in EXECUTION_MODES:
        raise CorpusError(f"record {index}: field 'mode' has unknown value {mode!r}")

    release_date: Optional[date] = None
    raw_date = obj.get("release_date")
    if raw_date is not None:
        try:
            release_date = date.fromisoformat(str(raw_date))
        except ValueError as exc:
            raise CorpusError(f"record {index}: field 'release_date' unparsable: {exc}") from exc

    return RawProblem(
        id=str(obj["id"]),
        title=str(obj.get("title", "")),
        statement=str(obj["statement"]),
        difficulty=difficulty,
        release_date=release_date,
        public_tests=_parse_tests(obj.get("public_tests"), "public", index, "public_tests"),
        private_tests=_parse_tests(obj.get("private_tests"), "private", index, "private_tests"),
        execution_mode=mode,
        entry_point=obj.get("entry_point"),
        starter_code=obj.get("starter_code"),
    )


def load_corpus(path: str | Path, filt: CorpusFilter = CorpusFilter()) -> list[RawProblem]:
    """Load a JSON-lines corpus, apply the filter, and return problems in
    stable (release_date, id) order."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CorpusError(f"cannot read corpus {path}: {exc}") from exc

    problems: list[RawProblem] = []
    seen: set[str] = set()
    for index, line in enumerate(text.splitlines()):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"record {index}: invalid JSON: {exc}") from exc
        problem = _parse_record(obj, index)
        if problem is None:
            continue
        if problem.id in seen:
            raise CorpusError(f"record {index}: field 'id' duplicates {problem.id!r}")
        seen.add(problem.id)
        if filt.admits(problem):
            problems.append(problem)

    problems.sort(key=lambda p: (p.release_date or date.min, p.id))
    return problems


def difficulty_partition(problems: Sequence[RawProblem]) -> dict[str, int]:
    counts = {d: 0 for d in DIFFICULTIES}
    for p in problems:
        counts[p.difficulty] += 1
    return counts


# ---------------------------------------------------------------------------
# Redaction verification
# ---------------------------------------------------------------------------

_EXAMPLE_RE = re.compile(r"example\s*\d", re.IGNORECASE)
_EXPLANATION_RE = re.compile(r"explanation\s*:", re.IGNORECASE)
_IO_LINE_RE = re.compile(r"^\s*(input|output)\s*:(.*)$", re.IGNORECASE)


def verify_redaction(statement: str, leak_strings: Iterable[str] = ()) -> RedactionReport:
    """Scan a statement for residual example markers.

    Default marker set: "Example<digit>" headers; "Input:"/"Output:" lines
    followed by a literal value on the same or next line; "Explanation:";
    and verbatim occurrences of the source problem's public test inputs
    (passed in as leak_strings).
    """
    findings: list[RedactionFinding] = []

    for m in _EXAMPLE_RE.finditer(statement):
        findings.append(RedactionFinding(m.start(), m.end(), "example_header", m.group(0)))
    for m in _EXPLANATION_RE.finditer(statement):
        findings.append(RedactionFinding(m.start(), m.end(), "explanation", m.group(0)))

    lines = statement.split("\n")
    offset = 0
    for i, line in enumerate(lines):
        m = _IO_LINE_RE.match(line)
        if m:
            value = m.group(2).strip()
            if not value and i + 1 < len(lines):
                value = lines[i + 1].strip()
            if value:
                findings.append(
                    RedactionFinding(
                        offset + m.start(),
                        offset + len(line),
                        f"{m.group(1).lower()}_line",
                        line.strip(),
                    )
                )
        offset += len(line) + 1

    for leak in leak_strings:
        needle = leak.strip()
        if len(needle) < MIN_LEAK_LEN:
            continue
        start = statement.find(needle)
        while start != -1:
            findings.append(
                RedactionFinding(start, start + len(needle), "verbatim_test_input", needle)
            )
            start = statement.find(needle, start + 1)

    findings.sort(key=lambda f: (f.start, f.end))
    return RedactionReport(findings)


# ---------------------------------------------------------------------------
# LLM standardization
# ---------------------------------------------------------------------------

_STATEMENT_BLOCK = re.compile(r"<<<STATEMENT>>>\n(.*?)\n?<<<END STATEMENT>>>", re.DOTALL)
_IO_NOTE_BLOCK = re.compile(r"<<<IO_NOTE>>>\n(.*?)\n?<<<END IO_NOTE>>>", re.DOTALL)

_CONSTRAINTS_RE = re.compile(r"^\s*constraints\s*:?\s*$", re.IGNORECASE)


def _constraints_block(statement: str) -> str:
    """The text from a bare 'Constraints' heading to the end of the statement."""
    lines = statement.split("\n")
    for i, line in enumerate(lines):
        if _CONSTRAINTS_RE.match(line):
            return "\n".join(lines[i:]).strip()
    return ""


def _squash_ws(text: str) -> str:
    return " ".join(text.split())


def standardize_spec(
    raw: RawProblem,
    gateway,
    prompt_set_version: str = "v1",
    strict: bool = True,
) -> ProblemSpec:
    """Rewrite a problem statement into its zero-example form via the model.

    The prompt never includes private tests; this is asserted before the
    call. With strict=True, residual example markers in the model output
    raise RedactionLeakError (carrying the draft spec and the findings).
    """
    if not raw.statement.strip():
        raise ValueError(f"problem {raw.id}: empty statement")

    system = load_template(prompt_set_version, "system_standardize")
    user = load_template(prompt_set_version, "standardize").format(statement=raw.statement)

    for t in raw.private_tests:
        for text in (t.input, t.expected_output):
            needle = text.strip()
            if len(needle) >= MIN_LEAK_LEN and needle in user:
                raise StandardizeError(
                    f"problem {raw.id}: standardization prompt would contain private test text"
                )

    exchange = gateway.complete(system, user)
    response = exchange.response_text
    if not response.strip():
        raise StandardizeError(f"problem {raw.id}: model returned empty transformation", response)

    stmt_m = _STATEMENT_BLOCK.search(response)
    note_m = _IO_NOTE_BLOCK.search(response)
    if not stmt_m or not stmt_m.group(1).strip():
        raise StandardizeError(
            f"problem {raw.id}: no sentinel-delimited statement in model output", response
        )
    standardized = stmt_m.group(1).strip()
    io_note = note_m.group(1).strip() if note_m else ""

    source_constraints = _constraints_block(raw.statement)
    if source_constraints and _squash_ws(source_constraints) not in _squash_ws(standardized):
        logger.warning("problem %s: constraints block not carried over verbatim", raw.id)

    report = verify_redaction(standardized, [t.input for t in raw.public_tests])
    spec = ProblemSpec(
        source=raw,
        standardized_statement=standardized,
        io_format_note=io_note,
        redaction_verified=report.clean,
    )
    if strict and not report.clean:
        raise RedactionLeakError(spec, report)
    return spec


# ---------------------------------------------------------------------------
# Spec persistence
# ---------------------------------------------------------------------------


def save_problem_specs(path: str | Path, specs: Iterable[ProblemSpec]) -> None:
    lines = []
    for spec in specs:
        report = verify_redaction(
            spec.standardized_statement, [t.input for t in spec.source.public_tests]
        )
        lines.append(
            json.dumps(
                {
                    "id": spec.source.id,
                    "standardized_statement": spec.standardized_statement,
                    "io_format_note": spec.io_format_note,
                    "redaction_findings": [f.to_dict() for f in report.findings],
                },
                sort_keys=True,
                ensure_ascii=False,
            )
        )
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def load_problem_specs(path: str | Path, problems: Sequence[RawProblem]) -> dict[str, ProblemSpec]:
    """Rehydrate persisted specs, joining them to their source problems."""
    by_id = {p.id: p for p in problems}
    specs: dict[str, ProblemSpec] = {}
    for index, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"spec record {index}: invalid JSON: {exc}") from exc
        pid = obj.get("id")
        if pid not in by_id:
            continue
        specs[pid] = ProblemSpec(
            source=by_id[pid],
            standardized_statement=obj.get("standardized_statement", ""),
            io_format_note=obj.get("io_format_note", ""),
            redaction_verified=not obj.get("redaction_findings"),
        )
    return specs
