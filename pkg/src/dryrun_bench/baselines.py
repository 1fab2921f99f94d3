"""Comparison methods: direct generation (with/without public tests) and a
test-driven reactive loop that executes candidates against the public suite
and mentally traces the first failing test.
"""

from __future__ import annotations

import logging
import re
import time
from dataclasses import dataclass
from typing import Optional

from .corpus import ProblemSpec, RawProblem
from .engine import (
    CodeExtractionError,
    EngineError,
    PipelineConfig,
    RunRecord,
    _io_directive,
    assert_no_test_text,
    fenced_blocks,
)
from .evaluator import EvalResult, SandboxEvaluator
from .gateway import LlmGateway, ModelEndpoint, accumulate_usage
from .prompts import load_template

logger = logging.getLogger(__name__)


@dataclass
class CodeSimConfig:
    max_plan_simulations: int = 5
    max_debug_simulations: int = 5
    endpoint: Optional[ModelEndpoint] = None
    prompt_set_version: str = "v1"

    def __post_init__(self):
        if self.max_plan_simulations < 1 or self.max_debug_simulations < 1:
            raise ValueError("simulation budgets must be >= 1")

    def to_dict(self) -> dict:
        return {
            "max_plan_simulations": self.max_plan_simulations,
            "max_debug_simulations": self.max_debug_simulations,
            "prompt_set_version": self.prompt_set_version,
        }


def _format_tests(problem: RawProblem) -> str:
    chunks = []
    for i, test in enumerate(problem.public_tests, start=1):
        chunks.append(f"Test {i}\nInput:\n{test.input}\nExpected output:\n{test.expected_output}")
    return "\n\n".join(chunks)


def _finish(record: RunRecord, gateway: LlmGateway, started: float) -> RunRecord:
    record.exchanges = list(gateway.history)
    record.usage = accumulate_usage(record.exchanges)
    if gateway.is_replay:
        record.wall_time_s = sum(e.latency_ms for e in record.exchanges) / 1000.0
    else:
        record.wall_time_s = time.monotonic() - started
    return record


def run_direct(
    problem: RawProblem,
    spec: Optional[ProblemSpec],
    include_public: bool,
    cfg: PipelineConfig,
    gateway: LlmGateway,
    run_index: int = 0,
) -> RunRecord:
    """Single-shot generation. With public tests the prompt carries the raw
    statement plus the public pairs; without, the zero-example spec only."""
    method = "direct_public" if include_public else "direct_nopublic"
    record = RunRecord(
        problem_id=problem.id,
        method=method,
        model=gateway.endpoint.model_name,
        run_index=run_index,
        config=cfg.to_dict(),
    )
    started = time.monotonic()
    system = load_template(cfg.prompt_set_version, "system")
    if include_public:
        user = load_template(cfg.prompt_set_version, "direct_public").format(
            statement=problem.statement,
            tests=_format_tests(problem),
            io_directive=_io_directive(problem),
        )
    else:
        if spec is None or not spec.redaction_verified:
            raise EngineError(f"problem {problem.id}: direct_nopublic requires a verified spec")
        user = load_template(cfg.prompt_set_version, "direct").format(
            statement=spec.standardized_statement,
            io_directive=_io_directive(problem),
        )
        assert_no_test_text(user, problem, "run_direct")

    try:
        exchange = gateway.complete(system, user)
        record.stage_sequence.append("direct_generate")
        blocks = fenced_blocks(exchange.response_text)
        if not blocks:
            raise CodeExtractionError("direct generation produced no fenced code block", exchange.response_text)
        record.final_code = blocks[0]
        record.status = "completed"
    except CodeExtractionError as exc:
        record.status = "failed_generation"
        record.error = str(exc)
    except Exception as exc:
        record.status = "aborted"
        record.error = f"{type(exc).__name__}: {exc}"
    return _finish(record, gateway, started)


def run_codesim(
    problem: RawProblem,
    cfg: CodeSimConfig,
    sandbox: SandboxEvaluator,
    gateway: LlmGateway,
    run_index: int = 0,
) -> RunRecord:
    """Reactive public-test loop: plan (validated by conditional simulation),
    synthesize, execute against the public suite, accept on all-pass, else
    mentally trace the first failing test and repair, within flat budgets."""
    if not problem.public_tests:
        raise EngineError(f"problem {problem.id}: codesim requires public tests")

    record = RunRecord(
        problem_id=problem.id,
        method="codesim",
        model=gateway.endpoint.model_name,
        run_index=run_index,
        config=cfg.to_dict(),
    )
    started = time.monotonic()
    iterations: list[dict] = []
    record.extra["iterations"] = iterations
    system = load_template(cfg.prompt_set_version, "system")
    version = cfg.prompt_set_version

    def ask(template: str, **kwargs) -> str:
        user = load_template(version, template).format(**kwargs)
        exchange = gateway.complete(system, user)
        if not exchange.response_text.strip():
            raise EngineError(f"{template}: empty model response")
        return exchange.response_text

    try:
        # Plan phase: simulate the plan on the first public test; refine only
        # when the simulation exposes a flaw.
        plan = ask("codesim_plan", statement=problem.statement)
        record.stage_sequence.append("codesim_plan")
        probe = problem.public_tests[0]
        for _ in range(cfg.max_plan_simulations):
            sim = ask(
                "codesim_plan_sim",
                statement=problem.statement,
                plan=plan,
                input=probe.input,
                expected=probe.expected_output,
            )
            record.stage_sequence.append("codesim_plan_sim")
            if not re.search(r"\bFLAW\b", sim):
                break
            plan = ask("codesim_plan_refine", statement=problem.statement, plan=plan, sim=sim)
            record.stage_sequence.append("codesim_plan_refine")

        # Synthesis + public execution loop.
        response = ask(
            "codesim_synthesize",
            statement=problem.statement,
            plan=plan,
            io_directive=_io_directive(problem),
        )
        record.stage_sequence.append("codesim_synthesize")
        blocks = fenced_blocks(response)
        if not blocks:
            raise CodeExtractionError("codesim synthesis produced no fenced code block", response)
        code = blocks[0]

        result = _public_eval(sandbox, problem, code)
        iterations.append(_iteration_entry(result))
        debug_rounds = 0
        while not result.public_pass and debug_rounds < cfg.max_debug_simulations:
            failing = next(o for o in result.outcomes if o.status != "pass")
            test = problem.public_tests[failing.test_index]
            observed = failing.actual_output if failing.status == "wrong_output" else f"<{failing.status}>"
            response = ask(
                "codesim_debug",
                statement=problem.statement,
                code=code,
                input=test.input,
                expected=test.expected_output,
                observed=observed,
            )
            record.stage_sequence.append("codesim_debug")
            debug_rounds += 1
            blocks = fenced_blocks(response)
            if blocks:
                code = blocks[0]
            else:
                record.warnings.append(f"debug round {debug_rounds}: no fenced block, kept previous code")
            result = _public_eval(sandbox, problem, code)
            iterations.append(_iteration_entry(result))

        record.final_code = code
        record.status = "accepted" if result.public_pass else "budget_exhausted"
    except CodeExtractionError as exc:
        record.status = "failed_generation"
        record.error = str(exc)
    except Exception as exc:
        logger.error("codesim aborted on problem %s: %s", problem.id, exc)
        record.status = "aborted"
        record.error = f"{type(exc).__name__}: {exc}"
    return _finish(record, gateway, started)


def _public_eval(sandbox: SandboxEvaluator, problem: RawProblem, code: str) -> EvalResult:
    return sandbox.evaluate(
        code,
        problem.public_tests,
        mode=problem.execution_mode,
        entry_point=problem.entry_point,
    )


def _iteration_entry(result: EvalResult) -> dict:
    return {
        "public_pass": result.public_pass,
        "verdicts": [o.status for o in result.outcomes],
    }
