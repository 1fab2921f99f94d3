"""Command-line entry point.

Subcommands: standardize | run | eval | report | ablate | replay-verify.
Exit codes: 0 success, 1 partial cell/verification failures, 2 configuration
errors. Endpoints and manifests are declarative JSON files (see README).
"""

from __future__ import annotations

import argparse
import filecmp
import json
import logging
import shutil
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

from . import artifacts, metrics
from .corpus import (
    CorpusError,
    CorpusFilter,
    RedactionLeakError,
    StandardizeError,
    load_corpus,
    save_problem_specs,
    standardize_spec,
)
from .evaluator import EvaluatorError, ExecutionLimits, SandboxEvaluator, classify
from .gateway import GatewayError, LlmGateway, Transcript
from .manifest import ManifestError, RunManifest, execute_manifest, load_endpoints
from .metrics import EvalRecord, MetricsError
from .gateway import TokenUsage

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_CONFIG = 2

ABLATION_PRESET = [
    {"label": "direct", "method": "direct_nopublic"},
    {"label": "base-planning", "method": "dryrun", "n_plan": 0, "n_sim": 0, "polish": False},
    {"label": "plan-refine-1", "method": "dryrun", "n_plan": 1, "n_sim": 0, "polish": False},
    {"label": "plan-refine-2", "method": "dryrun", "n_plan": 2, "n_sim": 0, "polish": False},
    {"label": "simulate-2-1", "method": "dryrun", "n_plan": 2, "n_sim": 1, "polish": False},
    {"label": "simulate-2-2", "method": "dryrun", "n_plan": 2, "n_sim": 2, "polish": False},
    {"label": "full", "method": "dryrun", "n_plan": 2, "n_sim": 2, "polish": True},
]


def _parse_filter(args) -> CorpusFilter:
    from datetime import date

    min_date = date.fromisoformat(args.filter_after) if args.filter_after else None
    difficulties = frozenset(args.difficulty.split(",")) if args.difficulty else frozenset()
    allow = frozenset(args.ids.split(",")) if args.ids else None
    return CorpusFilter(min_release_date=min_date, difficulties=difficulties, id_allowlist=allow)


# ---------------------------------------------------------------------------
# standardize
# ---------------------------------------------------------------------------


def cmd_standardize(args) -> int:
    endpoints = load_endpoints(args.endpoint_config)
    if args.endpoint not in endpoints:
        print(f"error: unknown endpoint {args.endpoint!r}", file=sys.stderr)
        return EXIT_CONFIG
    endpoint = endpoints[args.endpoint]
    problems = load_corpus(args.corpus, _parse_filter(args))
    transcript_dir = Path(args.transcript_dir) if args.transcript_dir else None
    if args.mode in ("record", "replay") and transcript_dir is None:
        print("error: --transcript-dir required in record/replay mode", file=sys.stderr)
        return EXIT_CONFIG

    specs = []
    failures: dict[str, list[dict]] = {}
    for problem in problems:
        if args.mode == "replay":
            gateway = LlmGateway(
                endpoint, mode="replay", transcript=Transcript.load(transcript_dir / f"{problem.id}.jsonl")
            )
        elif args.mode == "record":
            transcript_dir.mkdir(parents=True, exist_ok=True)
            path = transcript_dir / f"{problem.id}.jsonl"
            path.write_text("", encoding="utf-8")
            gateway = LlmGateway(endpoint, mode="record", transcript_file=path)
        else:
            gateway = LlmGateway(endpoint, mode="live")
        try:
            spec = standardize_spec(problem, gateway, prompt_set_version=args.prompt_set)
        except RedactionLeakError as exc:
            print(f"REDACTION FAIL {problem.id}: {exc}", file=sys.stderr)
            failures[problem.id] = [f.to_dict() for f in exc.report.findings]
            specs.append(exc.spec)
            continue
        except (StandardizeError, GatewayError) as exc:
            print(f"STANDARDIZE FAIL {problem.id}: {exc}", file=sys.stderr)
            failures[problem.id] = [{"pattern": "standardize_error", "matched_text": str(exc)}]
            continue
        specs.append(spec)

    save_problem_specs(args.out, specs)
    report_path = Path(args.report) if args.report else Path(args.out).with_suffix(".redaction.json")
    artifacts.atomic_write_text(report_path, artifacts.canonical_json(failures))
    print(f"standardized {len(specs)}/{len(problems)} problems, {len(failures)} failure(s)")
    return EXIT_OK if not failures else EXIT_PARTIAL


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def cmd_run(args) -> int:
    manifest = RunManifest.load(args.manifest)
    endpoints = load_endpoints(args.endpoint_config)
    results = execute_manifest(manifest, endpoints)
    aborted = [r for r in results if r.status == "aborted"]
    skipped = sum(1 for r in results if r.skipped)
    print(f"ran {len(results)} cell(s): {len(results) - len(aborted)} ok, {len(aborted)} aborted, {skipped} skipped")
    for r in aborted:
        print(f"  aborted: {r.problem_id}/run_{r.run_index}", file=sys.stderr)
    return EXIT_PARTIAL if aborted else EXIT_OK


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def _evaluate_artifacts(artifact_root: str, corpus_path: str, timeout_s: float, workers, method=None) -> tuple[int, int]:
    problems = {p.id: p for p in load_corpus(corpus_path)}
    evaluator = SandboxEvaluator(
        limits=ExecutionLimits(wall_timeout_s=timeout_s), workers=workers
    )
    evaluated = 0
    errors = 0
    for cell in artifacts.iter_run_dirs(artifact_root, method):
        obj = json.loads((cell / "record.json").read_text(encoding="utf-8"))
        pid = obj["problem_id"]
        problem = problems.get(pid)
        if problem is None:
            logger.warning("run %s: problem %s not in corpus, skipped", cell, pid)
            errors += 1
            continue
        final_code = obj.get("final_code", "")
        if obj.get("status") == "aborted" or not final_code.strip():
            artifacts.save_eval(
                cell, pid, obj.get("run_index", 0), "no_code", None,
                obj.get("method", ""), obj.get("model", ""), problem.difficulty,
            )
            evaluated += 1
            continue
        try:
            result = evaluator.evaluate(
                final_code, problem.all_tests, mode=problem.execution_mode,
                entry_point=problem.entry_point,
            )
        except EvaluatorError as exc:
            logger.error("run %s: evaluation failed: %s", cell, exc)
            errors += 1
            continue
        artifacts.save_eval(
            cell, pid, obj.get("run_index", 0), classify(result, has_code=True), result,
            obj.get("method", ""), obj.get("model", ""), problem.difficulty,
        )
        evaluated += 1
    return evaluated, errors


def cmd_eval(args) -> int:
    evaluated, errors = _evaluate_artifacts(
        args.artifact_root, args.corpus, args.timeout, args.workers, args.method
    )
    print(f"evaluated {evaluated} run(s), {errors} error(s)")
    return EXIT_PARTIAL if errors else EXIT_OK


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def collect_eval_records(artifact_root: str | Path, method=None) -> list[EvalRecord]:
    records = []
    for cell in artifacts.iter_run_dirs(artifact_root, method):
        eval_path = cell / "eval.json"
        if not eval_path.is_file():
            continue
        obj = json.loads(eval_path.read_text(encoding="utf-8"))
        usage = None
        record_path = cell / "record.json"
        if record_path.is_file():
            rec = json.loads(record_path.read_text(encoding="utf-8"))
            usage = TokenUsage.from_dict(rec.get("usage", {}))
        records.append(
            EvalRecord(
                problem_id=obj["problem_id"],
                method=obj.get("method", ""),
                model=obj.get("model", ""),
                replicate=int(obj.get("run_k", 0)),
                difficulty=obj.get("difficulty", "easy"),
                status=obj["status"],
                usage=usage,
            )
        )
    return records


_REPORT_KINDS = ("pass_table", "gap_report", "token_report")


def _emit_all(report, out_dir: Path, stem: str) -> None:
    for fmt, suffix in (("json", ".json"), ("csv", ".csv"), ("markdown", ".md")):
        metrics.emit(report, fmt, out_dir / f"{stem}{suffix}")


def cmd_report(args) -> int:
    records = collect_eval_records(args.artifact_root)
    if not records:
        print("error: no eval.json artifacts found", file=sys.stderr)
        return EXIT_CONFIG
    kinds = args.kinds.split(",") if args.kinds else list(_REPORT_KINDS)
    out_dir = Path(args.out)
    try:
        if "pass_table" in kinds:
            _emit_all(metrics.pass_at_1(records), out_dir, "pass_table")
        if "gap_report" in kinds:
            _emit_all(metrics.overconfidence_gap(records), out_dir, "gap_report")
        if "token_report" in kinds:
            _emit_all(metrics.token_report(records), out_dir, "token_report")
    except MetricsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"wrote {', '.join(kinds)} to {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# ablate
# ---------------------------------------------------------------------------


def _load_grid(args) -> list[dict]:
    if args.preset:
        return [dict(cfg) for cfg in ABLATION_PRESET]
    if not args.grid:
        raise ManifestError("ablate requires --grid FILE or --preset")
    grid = json.loads(Path(args.grid).read_text(encoding="utf-8"))
    if not isinstance(grid, list) or not all("label" in g for g in grid):
        raise ManifestError("grid file must be a JSON list of objects with 'label'")
    labels = [g["label"] for g in grid]
    if len(set(labels)) != len(labels):
        raise ManifestError("grid labels must be unique")
    return grid


def cmd_ablate(args) -> int:
    base = RunManifest.load(args.manifest)
    endpoints = load_endpoints(args.endpoint_config)
    grid = _load_grid(args)

    records_by_label = {}
    aborted = 0
    for cfg in grid:
        label = cfg["label"]
        variant = replace(
            base,
            method=cfg.get("method", "dryrun"),
            n_plan=int(cfg.get("n_plan", base.n_plan)),
            n_sim=int(cfg.get("n_sim", base.n_sim)),
            polish=bool(cfg.get("polish", True)),
            artifact_root=str(Path(base.artifact_root) / label),
        )
        results = execute_manifest(variant, endpoints)
        aborted += sum(1 for r in results if r.status == "aborted")
        _evaluate_artifacts(variant.artifact_root, variant.corpus, args.timeout, args.workers)
        records_by_label[label] = collect_eval_records(variant.artifact_root)

    labels = [cfg["label"] for cfg in grid]
    cells = metrics.ablation_grid(labels, records_by_label)
    out_dir = Path(args.out)
    _emit_all(cells, out_dir, "ablation")
    print(f"ablation over {len(labels)} config(s) written to {out_dir}")
    return EXIT_PARTIAL if aborted else EXIT_OK


# ---------------------------------------------------------------------------
# replay-verify
# ---------------------------------------------------------------------------


def _mirror_transcripts(src_root: Path, dst_root: Path) -> int:
    count = 0
    for cell in artifacts.iter_run_dirs(src_root):
        transcript = cell / "transcript.jsonl"
        if transcript.is_file():
            target = dst_root / cell.relative_to(src_root)
            target.mkdir(parents=True, exist_ok=True)
            shutil.copy2(transcript, target / "transcript.jsonl")
            count += 1
    return count


def _artifact_files(root: Path) -> list[Path]:
    names = {"record.json", "eval.json"}
    found = [p for p in sorted(root.rglob("*")) if p.is_file() and (p.name in names or "reports" in p.parts)]
    return found


def cmd_replay_verify(args) -> int:
    manifest = RunManifest.load(args.manifest)
    if manifest.mode != "replay":
        print("error: replay-verify requires a replay-mode manifest", file=sys.stderr)
        return EXIT_CONFIG
    endpoints = load_endpoints(args.endpoint_config)

    with tempfile.TemporaryDirectory(prefix="replay-verify-") as tmp:
        roots = [Path(tmp) / "a", Path(tmp) / "b"]
        for root in roots:
            copied = _mirror_transcripts(Path(manifest.artifact_root), root)
            if not copied:
                print("error: no transcripts under the manifest artifact root", file=sys.stderr)
                return EXIT_CONFIG
            variant = replace(manifest, artifact_root=str(root))
            execute_manifest(variant, endpoints)
            _evaluate_artifacts(str(root), manifest.corpus, args.timeout, args.workers)
            records = collect_eval_records(root)
            reports_dir = root / "reports"
            _emit_all(metrics.pass_at_1(records), reports_dir, "pass_table")
            _emit_all(metrics.overconfidence_gap(records), reports_dir, "gap_report")
            _emit_all(metrics.token_report(records), reports_dir, "token_report")

        files_a = _artifact_files(roots[0])
        mismatched = []
        for file_a in files_a:
            file_b = roots[1] / file_a.relative_to(roots[0])
            if not file_b.is_file() or not filecmp.cmp(file_a, file_b, shallow=False):
                mismatched.append(str(file_a.relative_to(roots[0])))
        if mismatched:
            print(f"REPLAY NONDETERMINISTIC: {len(mismatched)} file(s) differ:", file=sys.stderr)
            for name in mismatched[:20]:
                print(f"  {name}", file=sys.stderr)
            return EXIT_PARTIAL
        print(f"replay deterministic: {len(files_a)} artifact file(s) byte-identical across two executions")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dryrun-bench", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("standardize", help="rewrite problems into zero-example specs")
    p.add_argument("corpus")
    p.add_argument("--endpoint-config", required=True)
    p.add_argument("--endpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report", default=None)
    p.add_argument("--filter-after", default=None, help="keep problems released after YYYY-MM-DD")
    p.add_argument("--difficulty", default=None, help="comma-separated difficulty filter")
    p.add_argument("--ids", default=None, help="comma-separated id allowlist")
    p.add_argument("--mode", choices=("live", "record", "replay"), default="live")
    p.add_argument("--transcript-dir", default=None)
    p.add_argument("--prompt-set", default="v1")
    p.set_defaults(func=cmd_standardize)

    p = sub.add_parser("run", help="execute a run manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--endpoint-config", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="evaluate final programs against full suites")
    p.add_argument("--artifact-root", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--method", default=None)
    p.add_argument("--timeout", type=float, default=10.0)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="aggregate eval artifacts into reports")
    p.add_argument("--artifact-root", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--kinds", default=None, help=f"comma list of {','.join(_REPORT_KINDS)}")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("ablate", help="run an ablation grid and report it")
    p.add_argument("--manifest", required=True)
    p.add_argument("--endpoint-config", required=True)
    p.add_argument("--grid", default=None)
    p.add_argument("--preset", action="store_true", help="use the built-in 7-row grid")
    p.add_argument("--out", required=True)
    p.add_argument("--timeout", type=float, default=10.0)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("replay-verify", help="check byte-stability of a replay manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--endpoint-config", required=True)
    p.add_argument("--timeout", type=float, default=10.0)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_replay_verify)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ManifestError, CorpusError, MetricsError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
