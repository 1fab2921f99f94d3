"""Run artifact layout and persistence.

Layout: <root>/<method>/<model>/<problem_id>/run_<k>/ containing
plan_r*.md, code_s*.txt, trace_t*.md, transcript.jsonl, record.json, and
after evaluation eval.json. All writes are atomic (temp file + rename) and
all JSON is canonical (sorted keys) so replayed runs are byte-stable.
"""

from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Optional

from .engine import CandidateSolution, PlanRevision, RunRecord, SimulationTrace
from .evaluator import EvalResult
from .gateway import TokenUsage

_SAFE_RE = re.compile(r"[^A-Za-z0-9._-]+")


def safe_name(name: str) -> str:
    return _SAFE_RE.sub("_", name) or "_"


def run_dir(root: str | Path, method: str, model: str, problem_id: str, run_index: int) -> Path:
    return Path(root) / safe_name(method) / safe_name(model) / safe_name(problem_id) / f"run_{run_index}"


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, indent=2) + "\n"


def atomic_write_text(path: str | Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)
    return path


def save_run_record(directory: str | Path, record: RunRecord) -> Path:
    """Persist stage artifacts and record.json; returns the record path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    plans = []
    for i, plan in enumerate(record.plans):
        name = f"plan_r{i}.md"
        atomic_write_text(directory / name, plan.text)
        plans.append({"file": name, "provenance": plan.provenance, "revision_index": plan.revision_index})
    codes = []
    for i, code in enumerate(record.codes):
        name = f"code_s{i}.txt"
        atomic_write_text(directory / name, code.code)
        codes.append({"file": name, "produced_by": code.produced_by, "stage_index": code.stage_index})
    traces = []
    for i, trace in enumerate(record.traces):
        name = f"trace_t{i}.md"
        atomic_write_text(directory / name, trace.step_log)
        traces.append(
            {
                "file": name,
                "verdict": trace.verdict,
                "flaw_note": trace.flaw_note,
                "synthesized_input": trace.synthesized_input,
                "predicted_output": trace.predicted_output,
            }
        )

    payload = {
        "problem_id": record.problem_id,
        "method": record.method,
        "model": record.model,
        "run_index": record.run_index,
        "status": record.status,
        "config": record.config,
        "stage_sequence": record.stage_sequence,
        "plans": plans,
        "codes": codes,
        "traces": traces,
        "usage": record.usage.to_dict(),
        "final_code": record.final_code,
        "wall_time_s": round(record.wall_time_s, 3),
        "warnings": record.warnings,
        "error": record.error,
        "transcript": "transcript.jsonl",
        "extra": record.extra,
    }
    return atomic_write_text(directory / "record.json", canonical_json(payload))


def load_run_record(directory: str | Path) -> RunRecord:
    """Rehydrate a record from record.json (stage texts from their files)."""
    directory = Path(directory)
    obj = json.loads((directory / "record.json").read_text(encoding="utf-8"))

    def read(name: str) -> str:
        return (directory / name).read_text(encoding="utf-8")

    record = RunRecord(
        problem_id=obj["problem_id"],
        method=obj["method"],
        model=obj["model"],
        run_index=int(obj.get("run_index", 0)),
        config=obj.get("config", {}),
        status=obj.get("status", "completed"),
        final_code=obj.get("final_code", ""),
        wall_time_s=float(obj.get("wall_time_s", 0.0)),
        warnings=list(obj.get("warnings", [])),
        error=obj.get("error"),
        extra=obj.get("extra", {}),
    )
    record.usage = TokenUsage.from_dict(obj.get("usage", {}))
    record.stage_sequence = list(obj.get("stage_sequence", []))
    for meta in obj.get("plans", []):
        record.plans.append(
            PlanRevision(
                text=read(meta["file"]),
                revision_index=int(meta["revision_index"]),
                provenance=meta["provenance"],
            )
        )
    for meta in obj.get("codes", []):
        record.codes.append(
            CandidateSolution(
                code=read(meta["file"]),
                produced_by=meta["produced_by"],
                stage_index=int(meta["stage_index"]),
            )
        )
    for meta in obj.get("traces", []):
        record.traces.append(
            SimulationTrace(
                synthesized_input=meta.get("synthesized_input", ""),
                step_log=read(meta["file"]),
                predicted_output=meta.get("predicted_output", ""),
                verdict=meta.get("verdict", "inconclusive"),
                flaw_note=meta.get("flaw_note"),
            )
        )
    return record


def save_eval(
    directory: str | Path,
    problem_id: str,
    run_index: int,
    status: str,
    result: Optional[EvalResult],
    method: str,
    model: str,
    difficulty: str,
) -> Path:
    payload = {
        "problem_id": problem_id,
        "run_k": run_index,
        "method": method,
        "model": model,
        "difficulty": difficulty,
        "status": status,
        "outcomes": [o.to_dict() for o in result.outcomes] if result else [],
        "public_pass": result.public_pass if result else False,
        "private_pass": result.private_pass if result else False,
    }
    return atomic_write_text(Path(directory) / "eval.json", canonical_json(payload))


def load_eval(directory: str | Path) -> dict:
    return json.loads((Path(directory) / "eval.json").read_text(encoding="utf-8"))


def iter_run_dirs(root: str | Path, method: Optional[str] = None):
    """Yield every run cell directory under the artifact root."""
    root = Path(root)
    if not root.exists():
        return
    methods = [root / method] if method else sorted(p for p in root.iterdir() if p.is_dir())
    for method_dir in methods:
        if not method_dir.is_dir():
            continue
        for model_dir in sorted(p for p in method_dir.iterdir() if p.is_dir()):
            for problem_dir in sorted(p for p in model_dir.iterdir() if p.is_dir()):
                for cell in sorted(p for p in problem_dir.iterdir() if p.is_dir()):
                    if cell.name.startswith("run_"):
                        yield cell
