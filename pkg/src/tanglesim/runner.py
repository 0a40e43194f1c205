"""Replications, experiment matrices and the service-scale calibration sweep.

Output layout for a matrix run::

    out_dir/
      summary.json, table.csv            combined, one row per cell
      <policy>/<bus_count>/
        .done                            cell marker (presence = complete)
        summary.json, table.csv, ecdf.csv, boxplot.csv, outliers.csv
        rep_00/records.csv ...

Replication ``r`` of a cell runs with seed ``base_seed + r``.
"""

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import stats
from .config import ScenarioConfig
from .harness import SelectionPolicy
from .scenario import run_scenario

log = logging.getLogger(__name__)

TARGET_MEAN_LATENCY = 22.99
DONE_MARKER = ".done"


def replication_seed(base_seed: int, r: int) -> int:
    return base_seed + r


def _run_one(args):
    config, r = args
    return run_scenario(config, replication_seed(config.seed, r), r)


def run_replications(config: ScenarioConfig, workers: int = 1) -> list:
    jobs = [(config, r) for r in range(config.replications)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_one, jobs))
    return [_run_one(j) for j in jobs]


def cell_dir(out_dir, config: ScenarioConfig) -> Path:
    return Path(out_dir) / config.policy.value / str(config.bus_count)


def _write_cell(out: Path, results: list) -> stats.Report:
    for res in results:
        rep = out / f"rep_{res.replication_index:02d}"
        rep.mkdir(parents=True, exist_ok=True)
        stats.write_records(res.records, rep / "records.csv")
    stats.aggregate_replications(results)  # rejects mixed configurations
    # Summaries come from the exported records so that a resumed matrix,
    # which re-reads them, reports exactly the same numbers.
    report = stats.report_from_records(read_cell_records(out, [r.replication_index for r in results]))
    stats.export(report, out, include_records=False)
    return report


def read_cell_records(out: Path, replications=None) -> list:
    if replications is None:
        paths = sorted(out.glob("rep_*/records.csv"))
    else:
        paths = [out / f"rep_{r:02d}" / "records.csv" for r in replications]
    records = []
    for path in paths:
        records.extend(stats.read_records(path))
    return records


@dataclass
class MatrixResult:
    cells: list = field(default_factory=list)
    skipped: list = field(default_factory=list)
    failed: list = field(default_factory=list)
    report: stats.Report = None

    @property
    def ok(self) -> bool:
        return not self.failed


def run_cell(config: ScenarioConfig, out_dir, workers: int = 1) -> stats.Report:
    out = cell_dir(out_dir, config)
    out.mkdir(parents=True, exist_ok=True)
    results = run_replications(config, workers)
    report = _write_cell(out, results)
    (out / DONE_MARKER).write_text("complete\n", encoding="utf-8")
    return report


def run_matrix(configs, out_dir, workers: int = 1) -> MatrixResult:
    """Run every cell; a failing cell is logged and the others still run.

    Cells whose marker file exists are not rerun; their records are re-read
    for the combined summary.
    """
    result = MatrixResult()
    combined = []
    for cfg in configs:
        key = (cfg.policy.value, cfg.bus_count)
        out = cell_dir(out_dir, cfg)
        try:
            if (out / DONE_MARKER).exists():
                log.info("cell %s/%s already complete, skipping", *key)
                result.skipped.append(key)
                report = stats.report_from_records(read_cell_records(out, range(cfg.replications)))
            else:
                log.info("running cell %s/%s (%d replications)", key[0], key[1], cfg.replications)
                report = run_cell(cfg, out_dir, workers)
        except Exception as exc:  # noqa: BLE001 - recorded, matrix continues
            log.error("cell %s/%s failed: %s", key[0], key[1], exc)
            result.failed.append((key, str(exc)))
            continue
        result.cells.append(key)
        combined.extend(report.cells)
    result.report = stats.Report(combined, [])
    out_root = Path(out_dir)
    out_root.mkdir(parents=True, exist_ok=True)
    stats._atomic_write(out_root / "summary.json",
                        json.dumps(stats.summary_dict(result.report), indent=2, sort_keys=True) + "\n")
    stats._atomic_write(out_root / "table.csv", stats.summary_table(result.report))
    return result


def matrix_configs(base: ScenarioConfig, policies=None, scales=(60, 120, 240)) -> list:
    """Cells in declared order: scale-major, then policy."""
    policies = list(policies or SelectionPolicy)
    return [replace(base, policy=p, bus_count=b) for b in scales for p in policies]


@dataclass
class CalibrationPoint:
    factor: float
    mean_latency: float
    error_rate: float


@dataclass
class CalibrationResult:
    points: list
    best: CalibrationPoint
    target: float

    def as_dict(self) -> dict:
        return {
            "target_mean": self.target,
            "best_factor": self.best.factor,
            "points": [vars(p) for p in self.points],
        }


DEFAULT_FACTORS = (0.20, 0.22, 0.24, 0.26, 0.28, 0.30, 0.32)


def calibrate(base: ScenarioConfig, factors=DEFAULT_FACTORS, replications: int = 12,
              target: float = TARGET_MEAN_LATENCY, workers: int = 1) -> CalibrationResult:
    """Sweep ``pool.service_scale`` on the 60-bus Adaptive RTT cell.

    Reports the factor whose pooled mean latency is closest to ``target``.
    """
    points = []
    for k in factors:
        cfg = replace(base, bus_count=60, policy=SelectionPolicy.ADAPTIVE_RTT, replications=replications,
                      pool=replace(base.pool, service_scale=k))
        results = run_replications(cfg, workers)
        cell = stats.aggregate_replications(results).cells[0]
        points.append(CalibrationPoint(k, cell.summary.mean, cell.summary.error_rate))
        log.info("scale %.3f: mean %.2f s, errors %.2f%%", k, cell.summary.mean, 100 * cell.summary.error_rate)
    best = min(points, key=lambda p: abs(p.mean_latency - target))
    return CalibrationResult(points, best, target)
