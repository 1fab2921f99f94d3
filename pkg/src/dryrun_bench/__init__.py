"""Execution-free code-generation workbench.

Pipelines (zero-example planning/simulation and baselines), a record/replay
model gateway, a sandboxed judge, and pass@1 / token / overconfidence-gap
reporting over run artifacts.
"""

__version__ = "0.1.0"

from .corpus import (
    CorpusFilter,
    ProblemSpec,
    RawProblem,
    TestCase,
    load_corpus,
    standardize_spec,
    verify_redaction,
)
from .engine import PipelineConfig, RunRecord, extract_code_block, run_pipeline
from .evaluator import EvalResult, ExecutionLimits, SandboxEvaluator, classify, compare_output
from .gateway import ChatExchange, LlmGateway, ModelEndpoint, TokenUsage, Transcript, accumulate_usage
from .metrics import EvalRecord, ablation_grid, emit, overconfidence_gap, pass_at_1, token_report

__all__ = [
    "CorpusFilter",
    "ProblemSpec",
    "RawProblem",
    "TestCase",
    "load_corpus",
    "standardize_spec",
    "verify_redaction",
    "PipelineConfig",
    "RunRecord",
    "extract_code_block",
    "run_pipeline",
    "EvalResult",
    "ExecutionLimits",
    "SandboxEvaluator",
    "classify",
    "compare_output",
    "ChatExchange",
    "LlmGateway",
    "ModelEndpoint",
    "TokenUsage",
    "Transcript",
    "accumulate_usage",
    "EvalRecord",
    "ablation_grid",
    "emit",
    "overconfidence_gap",
    "pass_at_1",
    "token_report",
]
