"""The execution-free generation pipeline.

Stage order: initial plan, n_plan autonomous plan refinements, code
synthesis, then n_sim rounds of (mental simulation, trace-driven plan
refinement, resynthesis), and a final polish pass. No stage ever executes
candidate code; the only feedback channel is the model's own dry-run trace.
"""

from __future__ import annotations

import logging
import re
import time
from dataclasses import dataclass, field
from typing import Optional

from .corpus import ProblemSpec, RawProblem
from .gateway import ChatExchange, LlmGateway, ModelEndpoint, TokenUsage, accumulate_usage
from .prompts import load_template

logger = logging.getLogger(__name__)

METHODS = ("dryrun", "direct_public", "direct_nopublic", "codesim")

PLAN_PROVENANCES = ("initial", "autonomous_refine", "trace_refine")
VERDICTS = ("consistent", "flaw_found", "inconclusive")

# Leak-guard floor: shorter test strings match arbitrary prose.
MIN_GUARD_LEN = 3

# Oversized simulation traces are tail-truncated in refine prompts.
TRACE_TAIL_CHARS = 8000


class EngineError(Exception):
    pass


class CodeExtractionError(EngineError):
    def __init__(self, message: str, raw_response: str = ""):
        super().__init__(message)
        self.raw_response = raw_response


class PromptLeakError(EngineError):
    """A prompt was about to carry test input/expected-output text."""


@dataclass
class PipelineConfig:
    n_plan: int = 2
    n_sim: int = 2
    endpoint: Optional[ModelEndpoint] = None
    prompt_set_version: str = "v1"
    polish: bool = True

    def __post_init__(self):
        if self.n_plan < 0 or self.n_sim < 0:
            raise ValueError("n_plan and n_sim must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "n_plan": self.n_plan,
            "n_sim": self.n_sim,
            "prompt_set_version": self.prompt_set_version,
            "polish": self.polish,
        }


@dataclass(frozen=True)
class PlanRevision:
    text: str
    revision_index: int
    provenance: str

    def __post_init__(self):
        if not self.text:
            raise ValueError("plan text must be nonempty")
        if self.provenance not in PLAN_PROVENANCES:
            raise ValueError(f"unknown plan provenance {self.provenance!r}")


@dataclass(frozen=True)
class CandidateSolution:
    code: str
    produced_by: str  # "synthesize" | "polish"
    stage_index: int


@dataclass(frozen=True)
class SimulationTrace:
    synthesized_input: str
    step_log: str
    predicted_output: str
    verdict: str
    flaw_note: Optional[str] = None


@dataclass
class RunRecord:
    problem_id: str
    method: str
    model: str
    run_index: int = 0
    config: dict = field(default_factory=dict)
    plans: list[PlanRevision] = field(default_factory=list)
    codes: list[CandidateSolution] = field(default_factory=list)
    traces: list[SimulationTrace] = field(default_factory=list)
    stage_sequence: list[str] = field(default_factory=list)
    exchanges: list[ChatExchange] = field(default_factory=list)
    usage: TokenUsage = field(default_factory=TokenUsage)
    final_code: str = ""
    wall_time_s: float = 0.0
    status: str = "completed"
    warnings: list[str] = field(default_factory=list)
    error: Optional[str] = None
    extra: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Response parsing
# ---------------------------------------------------------------------------

_FENCE_RE = re.compile(r"```[^\n]*\n(.*?)(?:\n)?```", re.DOTALL)


def fenced_blocks(response: str) -> list[str]:
    return [m.group(1) for m in _FENCE_RE.finditer(response)]


def extract_code_block(response: str) -> str:
    """Content of the first fenced block, fence lines and language tag excluded."""
    blocks = fenced_blocks(response)
    if not blocks:
        raise CodeExtractionError("no fenced code block in model response", response)
    if len(blocks) > 1:
        logger.warning("response contains %d fenced blocks; taking the first", len(blocks))
    return blocks[0]


_SECTION_RE = re.compile(r"^[ \t]*#{2,4}[ \t]*(synthesized input|execution trace|predicted output|verdict)[ \t]*$", re.IGNORECASE | re.MULTILINE)
_FLAW_RE = re.compile(r"\bFLAW\b[:\s]*(.*)", re.IGNORECASE)
_CONSISTENT_RE = re.compile(r"\bCONSISTENT\b", re.IGNORECASE)


def _sections(response: str) -> dict[str, str]:
    found: dict[str, str] = {}
    matches = list(_SECTION_RE.finditer(response))
    for i, m in enumerate(matches):
        name = m.group(1).lower()
        end = matches[i + 1].start() if i + 1 < len(matches) else len(response)
        found[name] = response[m.end():end].strip()
    return found


def parse_simulation(response: str) -> SimulationTrace:
    """Lenient parse of a dry-run response into a SimulationTrace.

    The full response is kept as the step log. A response without a final
    predicted output is inconclusive rather than a hard failure.
    """
    sections = _sections(response)
    synthesized_input = sections.get("synthesized input", "").strip()
    predicted = sections.get("predicted output", "").strip()
    verdict_text = sections.get("verdict", "")

    if not predicted or not synthesized_input:
        return SimulationTrace(
            synthesized_input=synthesized_input,
            step_log=response,
            predicted_output=predicted,
            verdict="inconclusive",
        )

    search_space = verdict_text or response[-2000:]
    flaw = _FLAW_RE.search(search_space)
    if flaw:
        note = flaw.group(1).strip().split("\n")[0] or "flaw reported without description"
        verdict, flaw_note = "flaw_found", note
    elif _CONSISTENT_RE.search(search_space):
        verdict, flaw_note = "consistent", None
    else:
        verdict, flaw_note = "inconclusive", None
    return SimulationTrace(
        synthesized_input=synthesized_input,
        step_log=response,
        predicted_output=predicted,
        verdict=verdict,
        flaw_note=flaw_note,
    )


# ---------------------------------------------------------------------------
# Zero-example guard
# ---------------------------------------------------------------------------


def guard_strings(problem: RawProblem) -> list[str]:
    strings = []
    for test in problem.all_tests:
        for text in (test.input, test.expected_output):
            needle = text.strip()
            if len(needle) >= MIN_GUARD_LEN:
                strings.append(needle)
    return strings


def assert_no_test_text(prompt: str, problem: RawProblem, stage: str) -> None:
    for needle in guard_strings(problem):
        if needle in prompt:
            raise PromptLeakError(
                f"{stage} prompt for problem {problem.id} contains test text {needle[:60]!r}"
            )


def _io_directive(problem: RawProblem) -> str:
    if problem.execution_mode == "functional":
        return (
            f"Define a function named `{problem.entry_point}` with the described "
            "parameters; it must return the answer."
        )
    return "The program reads from standard input and writes to standard output."


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------


def _complete(gateway: LlmGateway, cfg: PipelineConfig, template: str, stage: str, problem: RawProblem, **kwargs) -> str:
    system = load_template(cfg.prompt_set_version, "system")
    user = load_template(cfg.prompt_set_version, template).format(**kwargs)
    assert_no_test_text(user, problem, stage)
    exchange = gateway.complete(system, user)
    if not exchange.response_text.strip():
        raise EngineError(f"{stage}: empty model response")
    return exchange.response_text


def generate_plan(spec: ProblemSpec, cfg: PipelineConfig, gateway: LlmGateway) -> PlanRevision:
    if not spec.redaction_verified:
        raise EngineError(f"problem {spec.source.id}: spec is not redaction-verified")
    text = _complete(
        gateway, cfg, "plan_initial", "generate_plan", spec.source,
        statement=spec.standardized_statement,
    )
    return PlanRevision(text=text, revision_index=0, provenance="initial")


def refine_plan(spec: ProblemSpec, plan: PlanRevision, cfg: PipelineConfig, gateway: LlmGateway) -> PlanRevision:
    text = _complete(
        gateway, cfg, "plan_refine", "refine_plan", spec.source,
        statement=spec.standardized_statement, plan=plan.text,
    )
    return PlanRevision(text=text, revision_index=plan.revision_index + 1, provenance="autonomous_refine")


def synthesize_code(
    spec: ProblemSpec, plan: PlanRevision, cfg: PipelineConfig, gateway: LlmGateway,
    stage_index: int = 0, warnings: Optional[list[str]] = None,
) -> CandidateSolution:
    if not plan.text:
        raise EngineError("synthesize_code requires a nonempty plan")
    response = _complete(
        gateway, cfg, "synthesize", "synthesize_code", spec.source,
        statement=spec.standardized_statement, plan=plan.text,
        io_directive=_io_directive(spec.source),
    )
    blocks = fenced_blocks(response)
    if not blocks:
        raise CodeExtractionError("synthesize_code: no fenced code block in response", response)
    if len(blocks) > 1 and warnings is not None:
        warnings.append(f"synthesize_code stage {stage_index}: {len(blocks)} fenced blocks, took the first")
    return CandidateSolution(code=blocks[0], produced_by="synthesize", stage_index=stage_index)


def simulate_execution(spec: ProblemSpec, code: CandidateSolution, cfg: PipelineConfig, gateway: LlmGateway) -> SimulationTrace:
    if not code.code:
        raise EngineError("simulate_execution requires nonempty code")
    response = _complete(
        gateway, cfg, "simulate", "simulate_execution", spec.source,
        statement=spec.standardized_statement, code=code.code,
    )
    return parse_simulation(response)


def trace_driven_refine(
    spec: ProblemSpec, plan: PlanRevision, trace: SimulationTrace, cfg: PipelineConfig, gateway: LlmGateway,
) -> PlanRevision:
    text = _complete(
        gateway, cfg, "trace_refine", "trace_driven_refine", spec.source,
        statement=spec.standardized_statement, plan=plan.text,
        trace=trace.step_log[-TRACE_TAIL_CHARS:],
    )
    return PlanRevision(text=text, revision_index=plan.revision_index + 1, provenance="trace_refine")


def polish_code(
    spec: ProblemSpec, plan: PlanRevision, code: CandidateSolution, cfg: PipelineConfig, gateway: LlmGateway,
    stage_index: int = 0, warnings: Optional[list[str]] = None,
) -> CandidateSolution:
    if not code.code:
        raise EngineError("polish_code requires nonempty code")
    response = _complete(
        gateway, cfg, "polish", "polish_code", spec.source,
        statement=spec.standardized_statement, plan=plan.text, code=code.code,
    )
    blocks = fenced_blocks(response)
    if not blocks:
        # Documented fallback: keep the pre-polish code.
        if warnings is not None:
            warnings.append("polish_code: no fenced block in response, kept pre-polish code")
        return CandidateSolution(code=code.code, produced_by="polish", stage_index=stage_index)
    if len(blocks) > 1 and warnings is not None:
        warnings.append(f"polish_code: {len(blocks)} fenced blocks, took the first")
    return CandidateSolution(code=blocks[0], produced_by="polish", stage_index=stage_index)


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------


def _finish_record(record: RunRecord, gateway: LlmGateway, started: float) -> RunRecord:
    record.exchanges = list(gateway.history)
    record.usage = accumulate_usage(record.exchanges)
    if gateway.is_replay:
        # Deterministic wall time: replays must be byte-stable.
        record.wall_time_s = sum(e.latency_ms for e in record.exchanges) / 1000.0
    else:
        record.wall_time_s = time.monotonic() - started
    return record


def run_pipeline(
    spec: ProblemSpec,
    cfg: PipelineConfig,
    gateway: LlmGateway,
    run_index: int = 0,
) -> RunRecord:
    """Run the full pipeline on one problem. 3 + n_plan + 3*n_sim gateway
    calls when polish is on; a stage hard-error yields a partial record with
    status "aborted" instead of raising."""
    if not spec.standardized_statement.strip():
        raise EngineError(f"problem {spec.source.id}: spec has empty standardized statement")
    if not spec.redaction_verified:
        raise EngineError(f"problem {spec.source.id}: spec is not redaction-verified")

    record = RunRecord(
        problem_id=spec.source.id,
        method="dryrun",
        model=gateway.endpoint.model_name,
        run_index=run_index,
        config=cfg.to_dict(),
    )
    started = time.monotonic()
    try:
        plan = generate_plan(spec, cfg, gateway)
        record.plans.append(plan)
        record.stage_sequence.append("generate_plan")

        for _ in range(cfg.n_plan):
            plan = refine_plan(spec, plan, cfg, gateway)
            record.plans.append(plan)
            record.stage_sequence.append("refine_plan")

        code = synthesize_code(spec, plan, cfg, gateway, stage_index=0, warnings=record.warnings)
        record.codes.append(code)
        record.stage_sequence.append("synthesize_code")

        for _ in range(cfg.n_sim):
            trace = simulate_execution(spec, code, cfg, gateway)
            record.traces.append(trace)
            record.stage_sequence.append("simulate_execution")

            # Unconditional: the plan is updated whatever the verdict was.
            plan = trace_driven_refine(spec, plan, trace, cfg, gateway)
            record.plans.append(plan)
            record.stage_sequence.append("trace_driven_refine")

            code = synthesize_code(
                spec, plan, cfg, gateway, stage_index=len(record.codes), warnings=record.warnings
            )
            record.codes.append(code)
            record.stage_sequence.append("synthesize_code")

        if cfg.polish:
            code = polish_code(
                spec, plan, code, cfg, gateway, stage_index=len(record.codes), warnings=record.warnings
            )
            record.codes.append(code)
            record.stage_sequence.append("polish_code")

        record.final_code = code.code
        record.status = "completed"
    except Exception as exc:
        logger.error("pipeline aborted on problem %s: %s", spec.source.id, exc)
        record.status = "aborted"
        record.error = f"{type(exc).__name__}: {exc}"
    return _finish_record(record, gateway, started)
