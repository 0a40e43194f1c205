"""Command line entry point: ``tanglesim run|matrix|calibrate|report``.

Exit codes: 0 success, 1 invalid configuration or input, 2 a run failed,
3 an output or input file could not be read or written.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import runner, stats
from .config import BUS_PRESETS, ConfigError, parse_config
from .harness import SelectionPolicy, TraceError

EXIT_OK, EXIT_INVALID, EXIT_RUN_FAILED, EXIT_IO = 0, 1, 2, 3
OUT_DIR_ENV = "TANGLESIM_OUT_DIR"

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # bad flags are validation errors, not run failures
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _csv_list(conv):
    def parse(text):
        try:
            return [conv(x) for x in text.split(",") if x.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    return parse


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="scenario file (INI sections [scenario], [pool], [estimator])")
    common.add_argument("--out-dir", default=os.environ.get(OUT_DIR_ENV, "results"),
                        help=f"output directory (default: ${OUT_DIR_ENV} or ./results)")
    common.add_argument("--seed", type=int, help="base seed; replication r uses seed + r")
    common.add_argument("--replications", type=int)
    common.add_argument("--trace", help="GPS trace file, or 'synthetic'")
    common.add_argument("--workers", type=int, default=1, help="worker processes for replications")
    common.add_argument("--quiet", action="store_true", help="only print errors")

    p = _Parser(prog="tanglesim", description="Tangle/MAM bus-publishing simulator")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="run one (policy, bus count) cell")
    run.add_argument("--policy", type=SelectionPolicy.parse)
    run.add_argument("--buses", type=int)

    mat = sub.add_parser("matrix", parents=[common], help="run every policy at every scale")
    mat.add_argument("--policy", dest="policies", type=_csv_list(SelectionPolicy.parse),
                     help="comma-separated policies (default: all)")
    mat.add_argument("--buses", dest="scales", type=_csv_list(int),
                     help=f"comma-separated bus counts (default: {','.join(map(str, BUS_PRESETS))})")

    cal = sub.add_parser("calibrate", parents=[common],
                         help="sweep the service-time scale on the 60-bus Adaptive RTT cell")
    cal.add_argument("--factors", type=_csv_list(float), default=list(runner.DEFAULT_FACTORS))
    cal.add_argument("--target", type=float, default=runner.TARGET_MEAN_LATENCY)

    rep = sub.add_parser("report", help="rebuild the combined summary from an existing output tree")
    rep.add_argument("--out-dir", default=os.environ.get(OUT_DIR_ENV, "results"))
    rep.add_argument("--quiet", action="store_true")
    return p


def _load_config(args):
    overrides = {"seed": args.seed, "replications": args.replications, "trace": args.trace}
    if getattr(args, "policy", None) is not None:
        overrides["policy"] = args.policy
    if getattr(args, "buses", None) is not None:
        overrides["bus_count"] = args.buses
    return parse_config(args.config, overrides)


def format_table(report: stats.Report) -> str:
    lines = [f"{'buses':>5}  {'policy':<15} {'mean [s]':>9}  {'95% CI [s]':<20} {'errors':>7}  {'n':>7}"]
    for c in report.cells:
        s = c.summary
        ci = f"[{s.ci95_low:.2f}, {s.ci95_high:.2f}]"
        lines.append(f"{c.bus_count:>5}  {c.policy:<15} {s.mean:>9.2f}  {ci:<20} {100 * s.error_rate:>6.2f}%  {s.n:>7}")
    return "\n".join(lines)


def _cmd_run(args, out):
    cfg = _load_config(args)
    report = runner.run_cell(cfg, args.out_dir, args.workers)
    out(format_table(report))
    out(f"results in {runner.cell_dir(args.out_dir, cfg)}")
    return EXIT_OK


def _cmd_matrix(args, out):
    base = _load_config(args)
    configs = runner.matrix_configs(base, args.policies, args.scales or BUS_PRESETS)
    result = runner.run_matrix(configs, args.out_dir, args.workers)
    out(format_table(result.report))
    if result.skipped:
        out(f"{len(result.skipped)} cell(s) were already complete and not rerun")
    for key, err in result.failed:
        print(f"cell {key[0]}/{key[1]} failed: {err}", file=sys.stderr)
    return EXIT_RUN_FAILED if result.failed else EXIT_OK


def _cmd_calibrate(args, out):
    base = _load_config(args)
    res = runner.calibrate(base, args.factors, base.replications, args.target, args.workers)
    out(f"{'factor':>7}  {'mean [s]':>9}  {'errors':>7}")
    for p in res.points:
        out(f"{p.factor:>7.3f}  {p.mean_latency:>9.2f}  {100 * p.error_rate:>6.2f}%")
    out(f"closest to {res.target:.2f} s: service_scale = {res.best.factor}")
    path = Path(args.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    stats._atomic_write(path / "calibration.json", json.dumps(stats._jf(res.as_dict()), indent=2) + "\n")
    return EXIT_OK


def _declared_order(path: Path) -> dict:
    try:
        cells = json.loads(path.read_text(encoding="utf-8"))["cells"]
        return {(c["policy"], int(c["bus_count"])): i for i, c in enumerate(cells)}
    except (OSError, ValueError, KeyError, TypeError):
        return {}


def _cmd_report(args, out):
    root = Path(args.out_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"no output directory {root}")
    order = [p.value for p in SelectionPolicy]
    declared = _declared_order(root / "summary.json")

    def rank(marker):
        key = (marker.parent.parent.name, int(marker.parent.name))
        # cells listed by the last matrix run keep their rows; others follow in canonical order
        return (declared.get(key, len(declared)), key[1], order.index(key[0]))

    cells = sorted(
        (m for m in root.glob(f"*/*/{runner.DONE_MARKER}")
         if m.parent.parent.name in order and m.parent.name.isdigit()),
        key=rank,
    )
    if not cells:
        raise FileNotFoundError(f"no completed cells under {root}")
    reports = []
    for marker in cells:
        reports.extend(stats.report_from_records(runner.read_cell_records(marker.parent)).cells)
    report = stats.Report(reports, [])
    stats._atomic_write(root / "summary.json",
                        json.dumps(stats.summary_dict(report), indent=2, sort_keys=True) + "\n")
    stats._atomic_write(root / "table.csv", stats.summary_table(report))
    out(format_table(report))
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "matrix": _cmd_matrix, "calibrate": _cmd_calibrate, "report": _cmd_report}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    out = (lambda *a: None) if args.quiet else print
    try:
        return COMMANDS[args.command](args, out)
    except (ConfigError, TraceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # noqa: BLE001
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUN_FAILED


if __name__ == "__main__":
    sys.exit(main())
