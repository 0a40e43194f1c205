import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tanglesim.config import ScenarioConfig
from tanglesim.harness import SelectionPolicy
from tanglesim.scenario import run_scenario
from tanglesim.stats import (
    TxRecord, aggregate_replications, boxplot, ecdf, export, read_records, report_from_records, summarize,
)


def quantile_oracle(values, q):
    # sort, then interpolate between the ranks floor(h) and ceil(h), h = (n - 1) q
    xs = sorted(values)
    h = (len(xs) - 1) * q
    lo = math.floor(h)
    hi = min(lo + 1, len(xs) - 1)
    return xs[lo] + (h - lo) * (xs[hi] - xs[lo])


def _rec(total, success=True, rep=0, node=0, policy="adaptive-rtt", buses=60):
    if success:
        return TxRecord("b", node, policy, 0.0, True, total * 0.25, total * 0.7, total * 0.05, total, rep,
                        bus_count=buses)
    return TxRecord("b", node, policy, 0.0, False, None, None, None, total, rep, bus_count=buses)


def test_linear_quartiles():
    b = boxplot([1, 2, 3, 4, 5, 6, 7, 8])
    assert (b.q1, b.median, b.q3) == (2.75, 4.5, 6.25)
    assert b.outliers == ()


def test_constant_data_quartiles():
    b = boxplot([3.5] * 3)
    assert b.q1 == b.median == b.q3 == 3.5 and b.outliers == ()


def test_outlier_flagged():
    b = boxplot([1, 2, 3, 4, 100])
    assert b.outliers == (100.0,)
    assert b.whisker_high == 4.0 and b.whisker_low == 1.0


def test_empty_inputs_rejected():
    with pytest.raises(ValueError):
        boxplot([])
    with pytest.raises(ValueError):
        ecdf([])


def test_zero_variance_summary():
    s = summarize([5, 5, 5, 5], 0, 4)
    assert (s.mean, s.std, s.ci95_low, s.ci95_high) == (5, 0, 5, 5)


def test_error_rate():
    assert summarize([1.0] * 97, 3, 100).error_rate == pytest.approx(0.03)


def test_no_samples_marks_undefined():
    s = summarize([], 2, 2)
    assert not s.defined and math.isnan(s.mean) and s.error_rate == 1.0
    with pytest.raises(ValueError):
        summarize([], 3, 2)


def test_ecdf_counting():
    f = ecdf([1, 2, 2, 4])
    assert f(2) == 0.75 and f(0.5) == 0.0 and f(4) == 1.0
    one = ecdf([7.0])
    assert list(one.x) == [7.0] and list(one.fraction) == [1.0]


@given(st.lists(st.lists(st.floats(0, 1e4, allow_nan=False), min_size=1, max_size=40), min_size=1, max_size=6),
       st.floats(0, 1e4, allow_nan=False))
def test_pooled_ecdf_is_weighted_merge(reps, x):
    pooled = ecdf([v for r in reps for v in r])
    n = sum(len(r) for r in reps)
    merged = sum(len(r) * ecdf(r)(x) for r in reps) / n
    assert pooled(x) == pytest.approx(merged, abs=1e-12)


@settings(max_examples=1000, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=1000))
def test_boxplot_matches_oracle(xs):
    b = boxplot(xs)
    for got, q in ((b.q1, 0.25), (b.median, 0.5), (b.q3, 0.75)):
        assert got == pytest.approx(quantile_oracle(xs, q), rel=1e-9, abs=1e-6)
    lo, hi = b.q1 - 1.5 * b.iqr, b.q3 + 1.5 * b.iqr
    assert sorted(b.outliers) == sorted(v for v in xs if v < lo or v > hi)
    inside = [v for v in xs if lo <= v <= hi]
    assert (b.whisker_low, b.whisker_high) == (min(inside), max(inside))


@given(st.lists(st.floats(0, 1e3, allow_nan=False), max_size=50), st.integers(0, 50))
def test_error_rate_bounds(xs, errors):
    s = summarize(xs, errors, len(xs) + errors)
    assert 0.0 <= s.error_rate <= 1.0


def test_ci_shrinks_with_sqrt_n():
    rng = np.random.default_rng(12)
    widths = {}
    for n in (400, 1600, 6400):
        s = summarize(rng.normal(20, 5, n), 0, n)
        widths[n] = s.ci95_high - s.ci95_low
    assert widths[400] / widths[1600] == pytest.approx(2.0, rel=0.1)
    assert widths[1600] / widths[6400] == pytest.approx(2.0, rel=0.1)


def test_failures_excluded_from_latency():
    cell = report_from_records([_rec(10), _rec(20), _rec(500, success=False)]).cells[0]
    assert cell.summary.mean == 15 and cell.summary.n == 2
    assert cell.summary.error_rate == pytest.approx(1 / 3)


def test_pooled_mean_is_weighted_mean_of_replications():
    rng = random.Random(0)
    recs = [_rec(rng.uniform(5, 50), rep=r) for r in range(4) for _ in range(rng.randint(5, 30))]
    cell = report_from_records(recs).cells[0]
    weighted = sum(row["mean_total"] * row["successes"] for row in cell.per_replication) / len(recs)
    assert cell.summary.mean == pytest.approx(weighted)


def test_decomposition_identity_on_simulated_cell():
    res = run_scenario(ScenarioConfig(bus_count=20, duration=1200), seed=3)
    cell = aggregate_replications([res]).cells[0]
    c = cell.components
    assert c["tip_selection"] + c["pow"] + c["network"] == pytest.approx(cell.summary.mean, abs=1e-6)


def test_single_replication_pooled_equals_itself():
    res = run_scenario(ScenarioConfig(bus_count=10, duration=900, policy=SelectionPolicy.DYNAMIC_RANDOM), seed=1)
    cell = aggregate_replications([res]).cells[0]
    assert cell.per_replication[0]["mean_total"] == pytest.approx(cell.summary.mean)


def test_mixed_configurations_rejected():
    a = run_scenario(ScenarioConfig(bus_count=5, duration=600), seed=1)
    b = run_scenario(ScenarioConfig(bus_count=5, duration=900), seed=2)
    with pytest.raises(ValueError):
        aggregate_replications([a, b])


def test_export_round_trip_and_byte_stability(tmp_path):
    runs = [run_scenario(ScenarioConfig(bus_count=10, duration=900), seed=s, replication_index=i)
            for i, s in enumerate((1, 2))]
    report = aggregate_replications(runs)
    export(report, tmp_path / "a")
    export(report, tmp_path / "b")
    for name in ("records.csv", "summary.json", "table.csv", "ecdf.csv", "boxplot.csv", "outliers.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    again = report_from_records(read_records(tmp_path / "a" / "records.csv")).cells[0]
    orig = report.cells[0]
    assert again.summary.n == orig.summary.n and again.summary.errors == orig.summary.errors
    assert again.summary.mean == pytest.approx(orig.summary.mean, abs=1e-6)


def test_export_of_empty_report_has_headers_only(tmp_path):
    export(report_from_records([]), tmp_path)
    for name in ("records.csv", "table.csv", "ecdf.csv", "boxplot.csv", "outliers.csv"):
        lines = (tmp_path / name).read_text().splitlines()
        assert len(lines) == 1, name


def test_export_reports_unwritable_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match="file"):
        export(report_from_records([]), blocker / "sub")
