from __future__ import annotations

import json
import random
import statistics

import pytest
from hypothesis import given
from hypothesis import strategies as st

from dryrun_bench.gateway import TokenUsage
from dryrun_bench.metrics import (
    AggregateStat,
    EvalRecord,
    MetricsError,
    ablation_grid,
    emit,
    overconfidence_gap,
    pass_at_1,
    token_report,
)


def _records(solves_per_replicate, n_problems=4, method="dryrun", model="m", difficulty="hard"):
    """solves_per_replicate[k] problems are solved in replicate k, rest failed."""
    records = []
    for k, solved in enumerate(solves_per_replicate):
        for p in range(n_problems):
            records.append(
                EvalRecord(
                    problem_id=f"p{p}",
                    method=method,
                    model=model,
                    replicate=k,
                    difficulty=difficulty,
                    status="solved" if p < solved else "failed_public",
                )
            )
    return records


def _rec(pid, k, status, difficulty="easy", usage=None, method="dryrun", model="m"):
    return EvalRecord(pid, method, model, k, difficulty, status, usage)


# ---------------------------------------------------------------------------
# AggregateStat
# ---------------------------------------------------------------------------


def test_stat_single_value_is_degenerate():
    stat = AggregateStat.from_values([42.0])
    assert stat.sd == 0.0 and stat.n == 1 and stat.degenerate


@given(st.lists(st.floats(min_value=0, max_value=100), min_size=2, max_size=12))
def test_stat_matches_statistics_module(values):
    stat = AggregateStat.from_values(values)
    assert stat.mean == pytest.approx(statistics.fmean(values))
    assert stat.sd == pytest.approx(statistics.stdev(values))
    assert stat.sd >= 0


# ---------------------------------------------------------------------------
# pass_at_1
# ---------------------------------------------------------------------------


def test_pass_at_1_identical_replicates():
    table = pass_at_1(_records([3, 3, 3]))
    stat = table.rows[("dryrun", "m")]["overall"]
    assert (stat.mean, stat.sd, stat.n) == (75.0, 0.0, 3)


def test_pass_at_1_hand_computed_sd():
    # replicate solves {2, 3, 4} of 4 -> rates {50, 75, 100} -> 75.0 +- 25.0
    table = pass_at_1(_records([2, 3, 4]))
    stat = table.rows[("dryrun", "m")]["overall"]
    assert stat.mean == 75.0
    assert stat.sd == 25.0
    hard = table.rows[("dryrun", "m")]["hard"]
    assert (hard.mean, hard.sd) == (75.0, 25.0)


def test_pass_at_1_overall_is_problem_weighted():
    # 1 easy always solved + 3 hard never solved: overall = 25%, not the
    # mean of tier means (which would be 50%).
    records = []
    for k in range(2):
        records.append(_rec("e0", k, "solved", "easy"))
        for p in range(3):
            records.append(_rec(f"h{p}", k, "failed_public", "hard"))
    table = pass_at_1(records)
    tiers = table.rows[("dryrun", "m")]
    assert tiers["overall"].mean == 25.0
    assert tiers["easy"].mean == 100.0
    assert tiers["hard"].mean == 0.0


def test_pass_at_1_tier_sums_match_overall():
    rng = random.Random(7)
    statuses = ("solved", "overconfident", "failed_public", "no_code")
    tiers = {"e0": "easy", "e1": "easy", "m0": "medium", "h0": "hard", "h1": "hard"}
    records = [
        _rec(pid, k, rng.choice(statuses), tier) for pid, tier in tiers.items() for k in range(3)
    ]
    table = pass_at_1(records)
    row = table.rows[("dryrun", "m")]
    # Per-replicate overall equals (sum tier solves)/(sum tier sizes):
    # verify on the means, which are linear in per-replicate rates.
    weighted = sum(row[t].mean * n for t, n in (("easy", 2), ("medium", 1), ("hard", 2)))
    assert row["overall"].mean == pytest.approx(weighted / 5)


def test_pass_at_1_missing_records_listed():
    records = _records([2, 2])
    records.pop()  # drop (p3, replicate 1)
    with pytest.raises(MetricsError, match=r"\(p3, 1\)"):
        pass_at_1(records)


def test_pass_at_1_duplicate_record_rejected():
    records = _records([1]) + [_rec("p0", 0, "solved", "hard")]
    with pytest.raises(MetricsError, match="duplicate"):
        pass_at_1(records)


def test_pass_at_1_bounds_property():
    rng = random.Random(3)
    for _ in range(50):
        solves = [rng.randint(0, 4) for _ in range(3)]
        stat = pass_at_1(_records(solves)).rows[("dryrun", "m")]["overall"]
        assert 0.0 <= stat.mean <= 100.0
        if len(set(solves)) == 1:
            assert stat.sd == 0.0


# ---------------------------------------------------------------------------
# overconfidence_gap
# ---------------------------------------------------------------------------


def test_gap_all_solved_is_zero():
    report = overconfidence_gap(_records([4, 4, 4]))
    stat = report.rows[("dryrun", "m")]["overconfident"]
    assert (stat.mean, stat.sd) == (0.0, 0.0)


def test_gap_hand_computed():
    # overconfident counts {10, 14, 18} -> 14.0 +- 4.0
    records = []
    for k, gap in enumerate((10, 14, 18)):
        for p in range(20):
            status = "overconfident" if p < gap else "solved"
            records.append(_rec(f"p{p}", k, status, "hard"))
    report = overconfidence_gap(records)
    stat = report.rows[("dryrun", "m")]["overconfident"]
    assert stat.mean == 14.0
    assert stat.sd == 4.0
    solved = report.rows[("dryrun", "m")]["solved"]
    assert solved.mean == 6.0


def test_gap_partition_per_replicate():
    rng = random.Random(11)
    statuses = ("solved", "overconfident", "failed_public", "no_code")
    n_problems = 12
    records = [
        _rec(f"p{p}", k, rng.choice(statuses)) for p in range(n_problems) for k in range(3)
    ]
    for k in range(3):
        chunk = [r for r in records if r.replicate == k]
        counts = {s: sum(1 for r in chunk if r.status == s) for s in statuses}
        assert sum(counts.values()) == n_problems
        assert counts["solved"] + counts["overconfident"] <= n_problems


# ---------------------------------------------------------------------------
# token_report
# ---------------------------------------------------------------------------


def test_token_report_single_record():
    records = [_rec("p0", 0, "solved", usage=TokenUsage.of(100, 50))]
    report = token_report(records)
    row = report.rows[("dryrun", "m")]
    assert (row["input"], row["output"], row["total"]) == (100.0, 50.0, 150.0)


def test_token_report_mean_over_problems():
    records = [
        _rec("p0", 0, "solved", usage=TokenUsage.of(1000, 500)),
        _rec("p1", 0, "solved", usage=TokenUsage.of(3000, 1500)),
    ]
    row = token_report(records).rows[("dryrun", "m")]
    assert (row["input"], row["output"], row["total"]) == (2000.0, 1000.0, 3000.0)


def test_token_report_replicates_averaged_before_problems():
    records = [
        _rec("p0", 0, "solved", usage=TokenUsage.of(100, 0)),
        _rec("p0", 1, "solved", usage=TokenUsage.of(300, 0)),  # p0 mean 200
        _rec("p1", 0, "solved", usage=TokenUsage.of(1000, 0)),
        _rec("p1", 1, "solved", usage=TokenUsage.of(1000, 0)),  # p1 mean 1000
    ]
    row = token_report(records).rows[("dryrun", "m")]
    assert row["input"] == 600.0


def test_token_report_order_invariant():
    rng = random.Random(5)
    records = [
        _rec(f"p{p}", k, "solved", usage=TokenUsage.of(rng.randint(0, 999), rng.randint(0, 999)))
        for p in range(4)
        for k in range(2)
    ]
    shuffled = list(records)
    rng.shuffle(shuffled)
    assert token_report(records).rows == token_report(shuffled).rows


def test_token_report_flags_estimated_fraction():
    records = [
        _rec("p0", 0, "solved", usage=TokenUsage.of(10, 10, estimated=True)),
        _rec("p1", 0, "solved", usage=TokenUsage.of(10, 10)),
    ]
    row = token_report(records).rows[("dryrun", "m")]
    assert row["estimated_fraction"] == 0.5


# ---------------------------------------------------------------------------
# ablation_grid
# ---------------------------------------------------------------------------


def test_ablation_single_config_all_solved():
    cells = ablation_grid(["full"], {"full": _records([4, 4, 4])})
    assert cells[0].label == "full"
    assert (cells[0].stat.mean, cells[0].stat.sd) == (100.0, 0.0)


def test_ablation_two_configs_hand_computed():
    grid = {
        "base": _records([2, 3, 4]),
        "full": _records([4, 4, 4]),
    }
    cells = ablation_grid(["base", "full"], grid)
    assert [c.label for c in cells] == ["base", "full"]
    assert (cells[0].stat.mean, cells[0].stat.sd) == (75.0, 25.0)
    assert (cells[1].stat.mean, cells[1].stat.sd) == (100.0, 0.0)


def test_ablation_subset_mismatch_rejected():
    grid = {
        "base": _records([2]),
        "full": _records([2], n_problems=5),
    }
    with pytest.raises(MetricsError, match="different problem set"):
        ablation_grid(["base", "full"], grid)


def test_ablation_duplicate_labels_rejected():
    with pytest.raises(MetricsError, match="unique"):
        ablation_grid(["a", "a"], {"a": _records([1])})


# ---------------------------------------------------------------------------
# emit
# ---------------------------------------------------------------------------


def test_emit_is_deterministic(tmp_path):
    table = pass_at_1(_records([2, 3, 4]))
    for fmt, name in (("json", "a.json"), ("csv", "a.csv"), ("markdown", "a.md")):
        first = emit(table, fmt, tmp_path / name).read_bytes()
        second = emit(table, fmt, tmp_path / name).read_bytes()
        assert first == second


def test_emit_json_round_trips(tmp_path):
    table = pass_at_1(_records([2, 3, 4]))
    path = emit(table, "json", tmp_path / "t.json")
    assert json.loads(path.read_text()) == table.to_dict()


def test_emit_markdown_renders_plus_minus(tmp_path):
    table = pass_at_1(_records([2, 3, 4]))
    text = emit(table, "markdown", tmp_path / "t.md").read_text()
    assert "75.0 ± 25.0" in text
    assert "| Method | Model | Easy | Medium | Hard | Overall |" in text


def test_emit_token_schema_matches_columns(tmp_path):
    records = [_rec("p0", 0, "solved", usage=TokenUsage.of(573, 896))]
    report = token_report(records)
    csv_text = emit(report, "csv", tmp_path / "t.csv").read_text()
    header, row = csv_text.strip().split("\n")
    assert header == "method,model,input,output,total,estimated_fraction"
    assert row.startswith("dryrun,m,573,896,1469")
    md = emit(report, "markdown", tmp_path / "t.md").read_text()
    assert "| Method | Model | Input | Output | Total |" in md


def test_emit_ablation_markdown(tmp_path):
    cells = ablation_grid(["base", "full"], {"base": _records([2, 3, 4]), "full": _records([4, 4, 4])})
    text = emit(cells, "markdown", tmp_path / "a.md").read_text()
    assert "| base | 75.00 ± 25.00 |" in text
    assert "| full | 100.00 ± 0.00 |" in text


def test_emit_unknown_format(tmp_path):
    with pytest.raises(MetricsError, match="format"):
        emit(pass_at_1(_records([1])), "yaml", tmp_path / "x")
