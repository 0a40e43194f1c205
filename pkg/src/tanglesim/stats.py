"""Latency statistics: summaries with 95% CIs, boxplots, ECDFs and exports.

Failed requests never enter latency statistics; they only count toward the
error rate. Quartiles use linear interpolation between order statistics
(numpy's default ``linear`` method).
"""

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

SUMMARY_SCHEMA = "tanglesim.summary/1"
Z95 = 1.96


@dataclass(frozen=True)
class TxRecord:
    bus_id: str
    node_id: int
    policy: str
    submit_time: float
    success: bool
    tip_selection_latency: Optional[float]
    pow_latency: Optional[float]
    network_latency: Optional[float]
    total_latency: float
    replication_index: int = 0
    queue_wait: float = 0.0
    message_index: int = 0
    bus_count: int = 0


RECORD_FIELDS = [f.name for f in fields(TxRecord)]


@dataclass(frozen=True)
class SummaryStats:
    n: int
    mean: float
    std: float
    ci95_low: float
    ci95_high: float
    error_rate: float
    attempts: int = 0
    errors: int = 0

    @property
    def defined(self) -> bool:
        return self.n > 0


@dataclass(frozen=True)
class BoxplotStats:
    q1: float
    median: float
    q3: float
    iqr: float
    whisker_low: float
    whisker_high: float
    outliers: tuple
    mean: float


@dataclass(frozen=True)
class EcdfSeries:
    x: np.ndarray
    fraction: np.ndarray

    def __call__(self, value) -> float:
        i = np.searchsorted(self.x, value, side="right")
        return 0.0 if i == 0 else float(self.fraction[i - 1])

    def __len__(self):
        return len(self.x)


def summarize(samples, errors: int, attempts: int) -> SummaryStats:
    """Mean, sample std and normal-approximation 95% CI of ``samples``.

    With no samples the statistics are NaN (check ``.defined``); a single
    sample gives std 0 and a degenerate interval.
    """
    if errors < 0 or attempts < errors:
        raise ValueError(f"need 0 <= errors <= attempts, got {errors}/{attempts}")
    x = np.asarray(samples, dtype=float)
    n = x.size
    rate = errors / attempts if attempts else 0.0
    if n == 0:
        nan = float("nan")
        return SummaryStats(0, nan, nan, nan, nan, rate, attempts, errors)
    mean = float(x.mean())
    std = float(x.std(ddof=1)) if n > 1 else 0.0
    half = Z95 * std / math.sqrt(n)
    return SummaryStats(n, mean, std, mean - half, mean + half, rate, attempts, errors)


def boxplot(samples) -> BoxplotStats:
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size == 0:
        raise ValueError("boxplot of an empty sample")
    q1, med, q3 = np.percentile(x, [25, 50, 75])
    iqr = q3 - q1
    lo, hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = x[(x >= lo) & (x <= hi)]
    outliers = x[(x < lo) | (x > hi)]
    return BoxplotStats(
        float(q1), float(med), float(q3), float(iqr),
        float(inside.min()), float(inside.max()),
        tuple(float(v) for v in outliers), float(x.mean()),
    )


def ecdf(samples) -> EcdfSeries:
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("ecdf of an empty sample")
    values, counts = np.unique(x, return_counts=True)
    return EcdfSeries(values, np.cumsum(counts) / x.size)


# -- aggregation ---------------------------------------------------------------


@dataclass
class CellReport:
    policy: str
    bus_count: int
    summary: SummaryStats
    boxplot: Optional[BoxplotStats]
    ecdf: Optional[EcdfSeries]
    components: dict
    per_replication: list
    replication_ci95: tuple
    node_share: dict = field(default_factory=dict)


@dataclass
class Report:
    cells: list
    records: list

    def cell(self, policy, bus_count) -> CellReport:
        for c in self.cells:
            if c.policy == policy and c.bus_count == bus_count:
                return c
        raise KeyError((policy, bus_count))


def _mean(values):
    return float(np.mean(values)) if len(values) else float("nan")


def _replication_row(rep, recs):
    ok = [r for r in recs if r.success]
    tips = [r.tip_selection_latency for r in ok]
    pows = [r.pow_latency for r in ok]
    return {
        "replication": rep,
        "attempts": len(recs),
        "successes": len(ok),
        "error_rate": (len(recs) - len(ok)) / len(recs) if recs else 0.0,
        "mean_total": _mean([r.total_latency for r in ok]),
        "mean_tip_selection": _mean(tips),
        "mean_pow": _mean(pows),
        "std_tip_selection": float(np.std(tips, ddof=1)) if len(tips) > 1 else float("nan"),
        "std_pow": float(np.std(pows, ddof=1)) if len(pows) > 1 else float("nan"),
    }


def cell_report(policy, bus_count, records) -> CellReport:
    ok = [r for r in records if r.success]
    totals = [r.total_latency for r in ok]
    summ = summarize(totals, len(records) - len(ok), len(records))
    by_rep: dict = {}
    for r in records:
        by_rep.setdefault(r.replication_index, []).append(r)
    per_rep = [_replication_row(k, by_rep[k]) for k in sorted(by_rep)]
    means = [row["mean_total"] for row in per_rep if row["successes"]]
    if len(means) > 1:
        m, s = float(np.mean(means)), float(np.std(means, ddof=1))
        rep_ci = (m - Z95 * s / math.sqrt(len(means)), m + Z95 * s / math.sqrt(len(means)))
    else:
        rep_ci = (float("nan"), float("nan"))
    share: dict = {}
    for r in ok:
        share[r.node_id] = share.get(r.node_id, 0) + 1
    components = {
        "tip_selection": _mean([r.tip_selection_latency for r in ok]),
        "pow": _mean([r.pow_latency for r in ok]),
        "network": _mean([r.network_latency for r in ok]),
        "queue_wait": _mean([r.queue_wait for r in ok]),
    }
    return CellReport(
        policy, bus_count, summ,
        boxplot(totals) if totals else None,
        ecdf(totals) if totals else None,
        components, per_rep, rep_ci,
        {k: share[k] for k in sorted(share)},
    )


def aggregate_replications(results) -> Report:
    """Pool the records of replicated runs per (policy, bus count).

    Runs grouped into one cell must agree on every setting except the seed.
    """
    groups: dict = {}
    fingerprints: dict = {}
    order = []
    for res in results:
        key = (res.config.policy.value, res.config.bus_count)
        fp = res.config.fingerprint()
        if key not in groups:
            groups[key] = []
            fingerprints[key] = fp
            order.append(key)
        elif fingerprints[key] != fp:
            raise ValueError(f"replications of cell {key} were run with different configurations")
        groups[key].extend(res.records)
    cells = [cell_report(p, b, groups[(p, b)]) for p, b in order]
    return Report(cells, [r for k in order for r in groups[k]])


def report_from_records(records) -> Report:
    groups: dict = {}
    for r in records:
        groups.setdefault((r.policy, r.bus_count), []).append(r)
    keys = list(groups)
    return Report([cell_report(p, b, groups[(p, b)]) for p, b in keys], list(records))


# -- export --------------------------------------------------------------------


def _f(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, float):
        return "nan" if math.isnan(x) else f"{x:.6f}"
    return str(x)


def _jf(x):
    """JSON-safe value with floats fixed to 6 decimals."""
    if isinstance(x, float):
        return None if math.isnan(x) or math.isinf(x) else round(x, 6)
    if isinstance(x, dict):
        return {str(k): _jf(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jf(v) for v in x]
    return x


def _atomic_write(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    try:
        with open(tmp, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def records_csv(records) -> str:
    lines = [",".join(RECORD_FIELDS)]
    for r in records:
        lines.append(",".join(_f(getattr(r, k)) for k in RECORD_FIELDS))
    return "\n".join(lines) + "\n"


def write_records(records, path):
    _atomic_write(Path(path), records_csv(records))


def read_records(path) -> list:
    out = []
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror or exc}") from exc
    with fh:
        for row in csv.DictReader(fh):
            opt = lambda k: float(row[k]) if row[k] != "" else None  # noqa: E731
            out.append(TxRecord(
                bus_id=row["bus_id"],
                node_id=int(row["node_id"]),
                policy=row["policy"],
                submit_time=float(row["submit_time"]),
                success=row["success"] == "1",
                tip_selection_latency=opt("tip_selection_latency"),
                pow_latency=opt("pow_latency"),
                network_latency=opt("network_latency"),
                total_latency=float(row["total_latency"]),
                replication_index=int(row["replication_index"]),
                queue_wait=float(row["queue_wait"]),
                message_index=int(row["message_index"]),
                bus_count=int(row["bus_count"]),
            ))
    return out


def summary_dict(report: Report) -> dict:
    cells = []
    for c in report.cells:
        s = c.summary
        entry = {
            "policy": c.policy,
            "bus_count": c.bus_count,
            "attempts": s.attempts,
            "errors": s.errors,
            "n": s.n,
            "mean_latency": s.mean,
            "std_latency": s.std,
            "ci95": [s.ci95_low, s.ci95_high],
            "error_rate": s.error_rate,
            "components": c.components,
            "replication_ci95": list(c.replication_ci95),
            "per_replication": c.per_replication,
            "node_share": c.node_share,
        }
        if c.boxplot is not None:
            b = asdict(c.boxplot)
            b["n_outliers"] = len(b.pop("outliers"))
            entry["boxplot"] = b
        cells.append(entry)
    return _jf({"schema": SUMMARY_SCHEMA, "cells": cells})


def summary_table(report: Report) -> str:
    """One CSV row per cell: buses, policy, mean, CI, error percentage and counts."""
    lines = ["bus_count,policy,mean_latency,ci95_low,ci95_high,error_pct,n,attempts"]
    for c in report.cells:
        s = c.summary
        lines.append(",".join([
            str(c.bus_count), c.policy, _f(s.mean), _f(s.ci95_low), _f(s.ci95_high),
            _f(100.0 * s.error_rate), str(s.n), str(s.attempts),
        ]))
    return "\n".join(lines) + "\n"


def export(report: Report, out_dir, include_records: bool = True) -> list:
    """Write records, summary, table, ECDF and boxplot series under ``out_dir``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {out}: {exc.strerror or exc}") from exc
    written = []

    def put(name, text):
        _atomic_write(out / name, text)
        written.append(out / name)

    if include_records:
        put("records.csv", records_csv(report.records))
    put("summary.json", json.dumps(summary_dict(report), indent=2, sort_keys=True) + "\n")
    put("table.csv", summary_table(report))
    ecdf_lines = ["policy,bus_count,latency,fraction"]
    box_lines = ["policy,bus_count,q1,median,q3,iqr,whisker_low,whisker_high,mean,n_outliers"]
    out_lines = ["policy,bus_count,latency"]
    for c in report.cells:
        if c.ecdf is not None:
            for x, p in zip(c.ecdf.x, c.ecdf.fraction):
                ecdf_lines.append(f"{c.policy},{c.bus_count},{float(x):.6f},{float(p):.6f}")
        if c.boxplot is not None:
            b = c.boxplot
            box_lines.append(",".join([c.policy, str(c.bus_count)] + [
                _f(v) for v in (b.q1, b.median, b.q3, b.iqr, b.whisker_low, b.whisker_high, b.mean)
            ] + [str(len(b.outliers))]))
            out_lines.extend(f"{c.policy},{c.bus_count},{v:.6f}" for v in b.outliers)
    put("ecdf.csv", "\n".join(ecdf_lines) + "\n")
    put("boxplot.csv", "\n".join(box_lines) + "\n")
    put("outliers.csv", "\n".join(out_lines) + "\n")
    return written
