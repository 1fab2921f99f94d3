"""Aggregation of evaluated runs into pass@1, token, overconfidence-gap, and
ablation reports, with deterministic JSON/CSV/markdown emission.

Conventions: sample (n-1) standard deviation across replicates; "overall" is
problem-weighted, not the mean of tier means; token means average replicates
per problem before averaging across problems.
"""

from __future__ import annotations

import csv
import io
import json
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .corpus import DIFFICULTIES
from .evaluator import SOLVE_STATUSES
from .gateway import TokenUsage

TIERS = DIFFICULTIES + ("overall",)


class MetricsError(Exception):
    pass


@dataclass(frozen=True)
class AggregateStat:
    mean: float
    sd: float
    n: int
    degenerate: bool = False  # n == 1: sd is 0 by convention, not evidence

    @classmethod
    def from_values(cls, values: Sequence[float]) -> "AggregateStat":
        if not values:
            raise MetricsError("cannot aggregate zero values")
        if len(values) == 1:
            return cls(mean=float(values[0]), sd=0.0, n=1, degenerate=True)
        return cls(mean=statistics.fmean(values), sd=statistics.stdev(values), n=len(values))

    def to_dict(self) -> dict:
        return {"mean": self.mean, "sd": self.sd, "n": self.n, "degenerate": self.degenerate}


@dataclass(frozen=True)
class EvalRecord:
    """One evaluated (problem, replicate) cell, ready for aggregation."""

    problem_id: str
    method: str
    model: str
    replicate: int
    difficulty: str
    status: str
    usage: Optional[TokenUsage] = None

    def __post_init__(self):
        if self.status not in SOLVE_STATUSES:
            raise ValueError(f"unknown solve status {self.status!r}")


@dataclass
class PassTable:
    # (method, model) -> tier -> AggregateStat
    rows: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            f"{method}/{model}": {tier: stat.to_dict() for tier, stat in tiers.items()}
            for (method, model), tiers in sorted(self.rows.items())
        }


@dataclass
class GapReport:
    # (method, model) -> {"solved": stat, "overconfident": stat}
    rows: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            f"{method}/{model}": {kind: stat.to_dict() for kind, stat in kinds.items()}
            for (method, model), kinds in sorted(self.rows.items())
        }


@dataclass
class TokenReport:
    # (method, model) -> {"input": float, "output": float, "total": float,
    #                     "estimated_fraction": float}
    rows: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {f"{method}/{model}": dict(vals) for (method, model), vals in sorted(self.rows.items())}


@dataclass(frozen=True)
class AblationCell:
    label: str
    stat: AggregateStat

    def to_dict(self) -> dict:
        return {"label": self.label, "stat": self.stat.to_dict()}


def _group_runs(records: Sequence[EvalRecord]) -> dict:
    groups: dict = {}
    for rec in records:
        groups.setdefault((rec.method, rec.model), []).append(rec)
    return groups


def _check_complete(records: Sequence[EvalRecord]) -> tuple[list[str], list[int]]:
    """Problems and replicates must form a full grid with one record per cell."""
    problems = sorted({r.problem_id for r in records})
    replicates = sorted({r.replicate for r in records})
    seen = {}
    for r in records:
        key = (r.problem_id, r.replicate)
        if key in seen:
            raise MetricsError(f"duplicate record for problem {r.problem_id} replicate {r.replicate}")
        seen[key] = r
    missing = [
        (p, k) for p in problems for k in replicates if (p, k) not in seen
    ]
    if missing:
        listing = ", ".join(f"({p}, {k})" for p, k in missing[:20])
        raise MetricsError(f"missing (problem, replicate) records: {listing}")
    return problems, replicates


def pass_at_1(records: Sequence[EvalRecord]) -> PassTable:
    """Per-replicate solve rates (solved / problems, as %) per tier and
    overall, then mean and sample SD across replicates."""
    table = PassTable()
    for key, group in _group_runs(records).items():
        problems, replicates = _check_complete(group)
        by_replicate = {k: [r for r in group if r.replicate == k] for k in replicates}
        tier_of = {r.problem_id: r.difficulty for r in group}
        tiers: dict[str, AggregateStat] = {}
        for tier in TIERS:
            if tier == "overall":
                members = set(problems)
            else:
                members = {p for p in problems if tier_of[p] == tier}
            if not members:
                continue
            rates = []
            for k in replicates:
                solved = sum(
                    1 for r in by_replicate[k] if r.problem_id in members and r.status == "solved"
                )
                rates.append(100.0 * solved / len(members))
            tiers[tier] = AggregateStat.from_values(rates)
        table.rows[key] = tiers
    return table


def overconfidence_gap(records: Sequence[EvalRecord]) -> GapReport:
    """Per-replicate counts of solved and overconfident problems, mean ± SD."""
    report = GapReport()
    for key, group in _group_runs(records).items():
        _, replicates = _check_complete(group)
        solved_counts = []
        gap_counts = []
        for k in replicates:
            chunk = [r for r in group if r.replicate == k]
            solved_counts.append(float(sum(1 for r in chunk if r.status == "solved")))
            gap_counts.append(float(sum(1 for r in chunk if r.status == "overconfident")))
        report.rows[key] = {
            "solved": AggregateStat.from_values(solved_counts),
            "overconfident": AggregateStat.from_values(gap_counts),
        }
    return report


def token_report(records: Sequence[EvalRecord]) -> TokenReport:
    """Mean per-problem token consumption (replicates averaged first)."""
    report = TokenReport()
    for key, group in _group_runs(records).items():
        with_usage = [r for r in group if r.usage is not None]
        if not with_usage:
            raise MetricsError(f"no usage data for {key[0]}/{key[1]}")
        by_problem: dict[str, list[TokenUsage]] = {}
        for r in with_usage:
            by_problem.setdefault(r.problem_id, []).append(r.usage)
        per_problem = [
            (
                statistics.fmean(u.input_tokens for u in usages),
                statistics.fmean(u.output_tokens for u in usages),
                statistics.fmean(u.total_tokens for u in usages),
            )
            for usages in by_problem.values()
        ]
        estimated = sum(1 for r in with_usage if r.usage.estimated)
        report.rows[key] = {
            "input": statistics.fmean(v[0] for v in per_problem),
            "output": statistics.fmean(v[1] for v in per_problem),
            "total": statistics.fmean(v[2] for v in per_problem),
            "estimated_fraction": estimated / len(with_usage),
        }
    return report


def ablation_grid(
    config_labels: Sequence[str], records_by_label: dict[str, Sequence[EvalRecord]]
) -> list[AblationCell]:
    """One overall pass@1 cell per ablation config, all on the same subset."""
    if len(set(config_labels)) != len(config_labels):
        raise MetricsError("ablation config labels must be unique")
    subsets = {
        label: frozenset(r.problem_id for r in records_by_label[label]) for label in config_labels
    }
    reference = subsets[config_labels[0]]
    for label, subset in subsets.items():
        if subset != reference:
            diff = sorted(subset ^ reference)
            raise MetricsError(f"config {label!r} covers a different problem set: {diff[:10]}")
    cells = []
    for label in config_labels:
        table = pass_at_1(list(records_by_label[label]))
        ((_, tiers),) = table.rows.items()
        cells.append(AblationCell(label=label, stat=tiers["overall"]))
    return cells


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------


def _pct(value: float, decimals: int) -> str:
    return f"{value:.{decimals}f}"


def _report_dict(report) -> dict:
    if isinstance(report, list):  # ablation cells
        return {"cells": [c.to_dict() for c in report]}
    return report.to_dict()


def _csv_rows(report) -> tuple[list[str], list[list[str]]]:
    if isinstance(report, PassTable):
        header = ["method", "model", "tier", "mean", "sd", "n"]
        rows = [
            [m, mo, tier, _pct(s.mean, 2), _pct(s.sd, 2), str(s.n)]
            for (m, mo), tiers in sorted(report.rows.items())
            for tier, s in ((t, tiers[t]) for t in TIERS if t in tiers)
        ]
    elif isinstance(report, GapReport):
        header = ["method", "model", "kind", "mean", "sd", "n"]
        rows = [
            [m, mo, kind, _pct(s.mean, 2), _pct(s.sd, 2), str(s.n)]
            for (m, mo), kinds in sorted(report.rows.items())
            for kind, s in sorted(kinds.items())
        ]
    elif isinstance(report, TokenReport):
        header = ["method", "model", "input", "output", "total", "estimated_fraction"]
        rows = [
            [m, mo, _pct(v["input"], 0), _pct(v["output"], 0), _pct(v["total"], 0), _pct(v["estimated_fraction"], 2)]
            for (m, mo), v in sorted(report.rows.items())
        ]
    elif isinstance(report, list):
        header = ["label", "mean", "sd", "n"]
        rows = [[c.label, _pct(c.stat.mean, 2), _pct(c.stat.sd, 2), str(c.stat.n)] for c in report]
    else:
        raise MetricsError(f"cannot serialize report of type {type(report).__name__}")
    return header, rows


def _markdown(report) -> str:
    def pm(stat: AggregateStat, decimals: int = 1) -> str:
        return f"{_pct(stat.mean, decimals)} ± {_pct(stat.sd, decimals)}"

    lines = []
    if isinstance(report, PassTable):
        lines.append("| Method | Model | Easy | Medium | Hard | Overall |")
        lines.append("|---|---|---|---|---|---|")
        for (method, model), tiers in sorted(report.rows.items()):
            cells = [pm(tiers[t]) if t in tiers else "-" for t in TIERS]
            lines.append(f"| {method} | {model} | " + " | ".join(cells) + " |")
    elif isinstance(report, GapReport):
        lines.append("| Method | Model | Solved | Overconfident |")
        lines.append("|---|---|---|---|")
        for (method, model), kinds in sorted(report.rows.items()):
            lines.append(
                f"| {method} | {model} | {pm(kinds['solved'])} | {pm(kinds['overconfident'])} |"
            )
    elif isinstance(report, TokenReport):
        lines.append("| Method | Model | Input | Output | Total |")
        lines.append("|---|---|---|---|---|")
        for (method, model), v in sorted(report.rows.items()):
            note = " *" if v["estimated_fraction"] > 0 else ""
            lines.append(
                f"| {method} | {model} | {_pct(v['input'], 0)} | {_pct(v['output'], 0)} | {_pct(v['total'], 0)}{note} |"
            )
        if any(v["estimated_fraction"] > 0 for v in report.rows.values()):
            fractions = ", ".join(
                f"{m}/{mo}: {_pct(v['estimated_fraction'] * 100, 1)}%"
                for (m, mo), v in sorted(report.rows.items())
                if v["estimated_fraction"] > 0
            )
            lines.append("")
            lines.append(f"\\* usage partly estimated ({fractions})")
    elif isinstance(report, list):
        lines.append("| Configuration | Pass@1 (%) ± SD |")
        lines.append("|---|---|")
        for cell in report:
            lines.append(f"| {cell.label} | {pm(cell.stat, 2)} |")
    else:
        raise MetricsError(f"cannot serialize report of type {type(report).__name__}")
    return "\n".join(lines) + "\n"


def emit(report, fmt: str, path: str | Path) -> Path:
    """Write a report deterministically: same report, same bytes."""
    path = Path(path)
    if fmt == "json":
        text = json.dumps(_report_dict(report), sort_keys=True, ensure_ascii=False, indent=2) + "\n"
    elif fmt == "csv":
        header, rows = _csv_rows(report)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        text = buf.getvalue()
    elif fmt == "markdown":
        text = _markdown(report)
    else:
        raise MetricsError(f"unknown emit format {fmt!r}")
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)
    return path
