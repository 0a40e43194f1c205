import json

import pytest

from tanglesim import cli, runner
from tanglesim.config import ConfigError, ScenarioConfig, parse_config
from tanglesim.harness import SelectionPolicy
from tanglesim.runner import matrix_configs, run_matrix
from tanglesim.scenario import run_scenario
from tanglesim.stats import aggregate_replications, export

SMALL = "[scenario]\nduration = 600\nreplications = 2\n"


def _write(tmp_path, text, name="scenario.ini"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_empty_file_gives_defaults(tmp_path):
    cfg = parse_config(_write(tmp_path, ""))
    assert (cfg.bus_count, cfg.duration, cfg.replications, cfg.pool.size) == (60, 3600, 12, 60)
    assert cfg.to_dict() == ScenarioConfig().to_dict()


def test_negative_bus_count_rejected(tmp_path):
    with pytest.raises(ConfigError, match="scenario.bus_count"):
        parse_config(_write(tmp_path, "[scenario]\nbus_count = -1\n"))


@pytest.mark.parametrize("text", [
    "[scenario]\nbus_cuont = 5\n",
    "[pool]\ngood_speed = 3\n",
    "[estimator]\ngamma = 1\n",
    "[extras]\nx = 1\n",
])
def test_unknown_keys_rejected(tmp_path, text):
    with pytest.raises(ConfigError):
        parse_config(_write(tmp_path, text))


def test_range_errors_name_the_key(tmp_path):
    with pytest.raises(ConfigError, match="pool"):
        parse_config(_write(tmp_path, "[pool]\nmix_good = 0.7\n"))
    with pytest.raises(ConfigError, match="estimator.alpha"):
        parse_config(_write(tmp_path, "[estimator]\nalpha = 2\n"))
    with pytest.raises(ConfigError, match="scenario.trace"):
        parse_config(_write(tmp_path, "[scenario]\ntrace = nowhere.csv\n"))


def test_flags_override_file(tmp_path):
    path = _write(tmp_path, "[scenario]\npolicy = fixed-random\nbus_count = 120\n")
    cfg = parse_config(path, {"policy": "adaptive-rtt", "bus_count": None})
    assert cfg.policy is SelectionPolicy.ADAPTIVE_RTT and cfg.bus_count == 120


def test_pool_section_values(tmp_path):
    cfg = parse_config(_write(tmp_path, "[pool]\nmix_good = 1\ngood_pow_median = 4\n"))
    assert cfg.pool.mix == {"good": 1.0, "mediocre": 0.0, "bad": 0.0}
    assert cfg.pool.class_params["good"].pow_median == 4


def test_seed_derivation():
    assert [runner.replication_seed(10, r) for r in range(3)] == [10, 11, 12]


def test_single_cell_matrix_matches_direct_run(tmp_path):
    cfg = ScenarioConfig(bus_count=6, duration=600, replications=2, seed=5)
    res = run_matrix([cfg], tmp_path / "m")
    assert res.ok and res.cells == [("adaptive-rtt", 6)]
    direct = aggregate_replications([run_scenario(cfg, 5, 0), run_scenario(cfg, 6, 1)])
    export(direct, tmp_path / "d")
    cell = tmp_path / "m" / "adaptive-rtt" / "6"
    # both routes write records with six-decimal formatting
    assert (cell / "table.csv").read_bytes() == (tmp_path / "d" / "table.csv").read_bytes()


def test_matrix_order_and_resume(tmp_path, caplog):
    base = ScenarioConfig(duration=600, replications=2)
    configs = matrix_configs(base, scales=(4, 8))
    assert [(c.bus_count, c.policy) for c in configs][:3] == [(4, p) for p in SelectionPolicy]
    first = run_matrix(configs, tmp_path)
    summary = (tmp_path / "summary.json").read_bytes()
    rows = [(c["bus_count"], c["policy"]) for c in json.loads(summary)["cells"]]
    assert rows == [(c.bus_count, c.policy.value) for c in configs]
    # a half-finished cell: marker removed, so it is rerun
    (tmp_path / "fixed-random" / "8" / runner.DONE_MARKER).unlink()
    with caplog.at_level("INFO", logger="tanglesim.runner"):
        second = run_matrix(configs, tmp_path)
    assert len(second.skipped) == len(configs) - 1 and not first.skipped
    assert "already complete" in caplog.text
    assert (tmp_path / "summary.json").read_bytes() == summary


def test_failing_cell_does_not_stop_matrix(tmp_path, monkeypatch):
    configs = matrix_configs(ScenarioConfig(duration=300, replications=1), scales=(3,))
    real = runner.run_cell

    def flaky(cfg, out_dir, workers=1):
        if cfg.policy is SelectionPolicy.DYNAMIC_RANDOM:
            raise RuntimeError("boom")
        return real(cfg, out_dir, workers)

    monkeypatch.setattr(runner, "run_cell", flaky)
    res = run_matrix(configs, tmp_path)
    assert not res.ok and len(res.cells) == 2 and res.failed[0][0] == ("dynamic-random", 3)


def test_cli_exit_codes(tmp_path, capsys):
    out = str(tmp_path / "out")
    cfg = _write(tmp_path, SMALL)
    assert cli.main(["run", "--config", str(cfg), "--buses", "4", "--out-dir", out, "--quiet"]) == 0
    assert (tmp_path / "out" / "adaptive-rtt" / "4" / runner.DONE_MARKER).exists()
    assert cli.main(["run", "--buses", "-1", "--out-dir", out, "--quiet"]) == 1
    with pytest.raises(SystemExit) as exc:
        cli.main(["run", "--policy", "nonsense", "--out-dir", out])
    assert exc.value.code == 1
    assert cli.main(["report", "--out-dir", out, "--quiet"]) == 0
    assert cli.main(["report", "--out-dir", str(tmp_path / "missing"), "--quiet"]) == 3
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    assert cli.main(["run", "--config", str(cfg), "--buses", "2", "--out-dir", str(blocker / "x"), "--quiet"]) == 3


def test_cli_matrix_and_report_agree(tmp_path, capsys):
    cfg = _write(tmp_path, SMALL)
    out = tmp_path / "out"
    argv = ["matrix", "--config", str(cfg), "--buses", "3,5", "--policy", "adaptive-rtt,fixed-random",
            "--out-dir", str(out)]
    assert cli.main(argv) == 0
    table = capsys.readouterr().out
    assert "adaptive-rtt" in table and "fixed-random" in table and "dynamic-random" not in table
    summary = (out / "summary.json").read_bytes()
    assert cli.main(["report", "--out-dir", str(out), "--quiet"]) == 0
    assert (out / "summary.json").read_bytes() == summary


def test_cli_out_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_DIR_ENV, str(tmp_path / "env"))
    args = cli.build_parser().parse_args(["run"])
    assert args.out_dir == str(tmp_path / "env")


def test_cli_calibrate_writes_result(tmp_path):
    cfg = _write(tmp_path, "[scenario]\nduration = 300\nreplications = 1\n")
    rc = cli.main(["calibrate", "--config", str(cfg), "--factors", "0.2,0.4", "--out-dir", str(tmp_path),
                   "--quiet"])
    assert rc == 0
    data = json.loads((tmp_path / "calibration.json").read_text())
    assert data["best_factor"] in (0.2, 0.4) and len(data["points"]) == 2


def test_worker_count_does_not_change_results():
    cfg = ScenarioConfig(bus_count=5, duration=600, replications=3, seed=9)
    serial = [r.records for r in runner.run_replications(cfg, workers=1)]
    parallel = [r.records for r in runner.run_replications(cfg, workers=2)]
    assert serial == parallel
