"""Declarative run manifests and their execution.

A manifest is a JSON file naming the corpus, the standardized-spec file, the
method, the endpoint, loop depths, replicate count, concurrency, artifact
root, and the gateway mode (live | record | replay). Execution walks the
(problem, replicate) grid with a bounded worker pool; completed cells are
skipped on rerun, so interrupted experiments resume cleanly.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from . import artifacts
from .baselines import CodeSimConfig, run_codesim, run_direct
from .corpus import (
    CorpusFilter,
    ProblemSpec,
    RawProblem,
    load_corpus,
    load_problem_specs,
)
from .engine import PipelineConfig, RunRecord, run_pipeline
from .evaluator import ExecutionLimits, SandboxEvaluator
from .gateway import LlmGateway, ModelEndpoint, Transcript

logger = logging.getLogger(__name__)

MODES = ("live", "record", "replay")


class ManifestError(Exception):
    pass


def load_endpoints(path: str | Path) -> dict[str, ModelEndpoint]:
    """Endpoint config file: {"endpoints": {name: {provider, model_name, ...}}}."""
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot read endpoint config {path}: {exc}") from exc
    endpoints = {}
    for name, fields in obj.get("endpoints", {}).items():
        try:
            endpoints[name] = ModelEndpoint(**fields)
        except (TypeError, ValueError) as exc:
            raise ManifestError(f"endpoint {name!r}: {exc}") from exc
    return endpoints


@dataclass
class RunManifest:
    corpus: str
    method: str
    endpoint: str
    artifact_root: str
    specs: Optional[str] = None
    n_plan: int = 2
    n_sim: int = 2
    polish: bool = True
    replicates: int = 3
    concurrency: int = 4
    mode: str = "live"
    prompt_set_version: str = "v1"
    max_plan_simulations: int = 5
    max_debug_simulations: int = 5
    filter_after: Optional[str] = None
    difficulties: list[str] = field(default_factory=list)
    id_allowlist: Optional[list[str]] = None
    wall_timeout_s: float = 10.0

    def __post_init__(self):
        if self.method not in ("dryrun", "direct_public", "direct_nopublic", "codesim"):
            raise ManifestError(f"unknown method {self.method!r}")
        if self.mode not in MODES:
            raise ManifestError(f"unknown mode {self.mode!r}")
        if self.replicates < 1:
            raise ManifestError("replicate count must be >= 1")
        if self.concurrency < 1:
            raise ManifestError("concurrency must be >= 1")

    @classmethod
    def load(cls, path: str | Path) -> "RunManifest":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise ManifestError(f"unknown manifest fields: {sorted(unknown)}")
        try:
            return cls(**obj)
        except TypeError as exc:
            raise ManifestError(str(exc)) from exc

    def corpus_filter(self) -> CorpusFilter:
        from datetime import date

        min_date = date.fromisoformat(self.filter_after) if self.filter_after else None
        return CorpusFilter(
            min_release_date=min_date,
            difficulties=frozenset(self.difficulties),
            id_allowlist=frozenset(self.id_allowlist) if self.id_allowlist is not None else None,
        )


@dataclass
class CellResult:
    problem_id: str
    run_index: int
    status: str
    skipped: bool = False


def _needs_specs(method: str) -> bool:
    return method in ("dryrun", "direct_nopublic")


def load_manifest_inputs(manifest: RunManifest) -> tuple[list[RawProblem], dict[str, ProblemSpec]]:
    problems = load_corpus(manifest.corpus, manifest.corpus_filter())
    if not problems:
        raise ManifestError(f"corpus {manifest.corpus} yields no problems under the manifest filter")
    specs: dict[str, ProblemSpec] = {}
    if _needs_specs(manifest.method):
        if not manifest.specs:
            raise ManifestError(f"method {manifest.method} requires a standardized spec file")
        specs = load_problem_specs(manifest.specs, problems)
        missing = [p.id for p in problems if p.id not in specs]
        if missing:
            raise ManifestError(f"spec file lacks entries for problems: {missing[:10]}")
        unverified = [pid for pid, s in specs.items() if not s.redaction_verified]
        if unverified:
            raise ManifestError(f"specs failed redaction verification: {unverified[:10]}")
    return problems, specs


def _validate_replay_transcripts(manifest: RunManifest, problems: list[RawProblem], endpoint: ModelEndpoint):
    missing = []
    for problem in problems:
        for k in range(manifest.replicates):
            cell = artifacts.run_dir(
                manifest.artifact_root, manifest.method, endpoint.model_name, problem.id, k
            )
            if not (cell / "transcript.jsonl").is_file():
                missing.append(f"{problem.id}/run_{k}")
    if missing:
        raise ManifestError(f"replay mode requires transcripts for every cell; missing: {missing[:10]}")


def build_cell_gateway(manifest: RunManifest, endpoint: ModelEndpoint, cell_dir: Path) -> LlmGateway:
    if manifest.mode == "replay":
        transcript = Transcript.load(cell_dir / "transcript.jsonl")
        return LlmGateway(endpoint, mode="replay", transcript=transcript)
    if manifest.mode == "record":
        cell_dir.mkdir(parents=True, exist_ok=True)
        transcript_file = cell_dir / "transcript.jsonl"
        transcript_file.write_text("", encoding="utf-8")
        return LlmGateway(
            endpoint, mode="record", transcript=Transcript(run_id=cell_dir.name),
            transcript_file=transcript_file,
        )
    return LlmGateway(endpoint, mode="live")


def execute_manifest(
    manifest: RunManifest,
    endpoints: dict[str, ModelEndpoint],
    gateway_factory: Optional[Callable[[RunManifest, ModelEndpoint, Path], LlmGateway]] = None,
    sandbox: Optional[SandboxEvaluator] = None,
) -> list[CellResult]:
    """Run method x problems x replicates. Returns one CellResult per cell."""
    if manifest.endpoint not in endpoints:
        raise ManifestError(f"manifest names unknown endpoint {manifest.endpoint!r}")
    endpoint = endpoints[manifest.endpoint]
    problems, specs = load_manifest_inputs(manifest)
    if manifest.mode == "replay":
        _validate_replay_transcripts(manifest, problems, endpoint)
    factory = gateway_factory or build_cell_gateway
    if manifest.method == "codesim" and sandbox is None:
        sandbox = SandboxEvaluator(limits=ExecutionLimits(wall_timeout_s=manifest.wall_timeout_s))

    cells = [(problem, k) for problem in problems for k in range(manifest.replicates)]

    def run_cell(cell) -> CellResult:
        problem, k = cell
        cell_dir = artifacts.run_dir(
            manifest.artifact_root, manifest.method, endpoint.model_name, problem.id, k
        )
        record_path = cell_dir / "record.json"
        if record_path.is_file():
            status = json.loads(record_path.read_text(encoding="utf-8")).get("status", "")
            if status != "aborted":
                return CellResult(problem.id, k, status, skipped=True)
        try:
            gateway = factory(manifest, endpoint, cell_dir)
            record = _dispatch(manifest, problem, specs.get(problem.id), gateway, sandbox, k)
        except Exception as exc:
            logger.error("cell %s/run_%d failed: %s", problem.id, k, exc)
            record = RunRecord(
                problem_id=problem.id,
                method=manifest.method,
                model=endpoint.model_name,
                run_index=k,
                status="aborted",
                error=f"{type(exc).__name__}: {exc}",
            )
        artifacts.save_run_record(cell_dir, record)
        return CellResult(problem.id, k, record.status)

    if manifest.concurrency == 1 or len(cells) == 1:
        return [run_cell(c) for c in cells]
    with ThreadPoolExecutor(max_workers=manifest.concurrency) as pool:
        return list(pool.map(run_cell, cells))


def _dispatch(
    manifest: RunManifest,
    problem: RawProblem,
    spec: Optional[ProblemSpec],
    gateway: LlmGateway,
    sandbox: Optional[SandboxEvaluator],
    run_index: int,
) -> RunRecord:
    if manifest.method == "dryrun":
        cfg = PipelineConfig(
            n_plan=manifest.n_plan,
            n_sim=manifest.n_sim,
            polish=manifest.polish,
            prompt_set_version=manifest.prompt_set_version,
        )
        return run_pipeline(spec, cfg, gateway, run_index=run_index)
    if manifest.method in ("direct_public", "direct_nopublic"):
        cfg = PipelineConfig(n_plan=0, n_sim=0, prompt_set_version=manifest.prompt_set_version)
        return run_direct(
            problem, spec, manifest.method == "direct_public", cfg, gateway, run_index=run_index
        )
    cfg = CodeSimConfig(
        max_plan_simulations=manifest.max_plan_simulations,
        max_debug_simulations=manifest.max_debug_simulations,
        prompt_set_version=manifest.prompt_set_version,
    )
    return run_codesim(problem, cfg, sandbox, gateway, run_index=run_index)
