"""Scenario configuration: INI-style file with sections, strict keys, flag overrides.

Example::

    [scenario]
    bus_count = 120
    policy = dynamic-random

    [pool]
    size = 60
    mix_good = 0.25

    [estimator]
    failure_penalty = 300
"""

import configparser
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .harness import SelectionPolicy
from .nodes import QUALITY_CLASSES, ClassParams, PoolConfig, PoolConfigError

BUS_PRESETS = (60, 120, 240)

# Factor picked by `tanglesim calibrate` against the 60-bus Adaptive RTT mean.
CALIBRATED_SERVICE_SCALE = 0.26


class ConfigError(ValueError):
    pass


@dataclass
class EstimatorConfig:
    alpha: float = 0.125
    beta: float = 0.25
    failure_penalty: float = 300.0
    shared: bool = True
    busy_threshold: int = 3
    avoid_penalized: bool = True


@dataclass
class ScenarioConfig:
    bus_count: int = 60
    duration: float = 3600.0
    policy: SelectionPolicy = SelectionPolicy.ADAPTIVE_RTT
    replications: int = 12
    seed: int = 1
    trace: str = "synthetic"
    message_interval: float = 80.0
    milestone_period: float = 60.0
    payload_bytes: int = 64
    pool: PoolConfig = field(default_factory=lambda: PoolConfig(service_scale=CALIBRATED_SERVICE_SCALE))
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)

    def validate(self) -> "ScenarioConfig":
        checks = [
            ("scenario.bus_count", self.bus_count >= 0, "must be >= 0"),
            ("scenario.duration", self.duration >= 0, "must be >= 0"),
            ("scenario.replications", self.replications >= 1, "must be >= 1"),
            ("scenario.message_interval", self.message_interval > 0, "must be > 0"),
            ("scenario.milestone_period", self.milestone_period > 0, "must be > 0"),
            ("scenario.payload_bytes", self.payload_bytes >= 0, "must be >= 0"),
            ("estimator.alpha", 0 < self.estimator.alpha <= 1, "must be in (0, 1]"),
            ("estimator.beta", 0 < self.estimator.beta <= 1, "must be in (0, 1]"),
            ("estimator.failure_penalty", self.estimator.failure_penalty > 0, "must be > 0"),
            ("estimator.busy_threshold", self.estimator.busy_threshold >= 1, "must be >= 1"),
        ]
        for key, ok, msg in checks:
            if not ok:
                raise ConfigError(f"{key}: {msg}")
        for q, cp in self.pool.class_params.items():
            for name in ("tip_median", "pow_median"):
                if getattr(cp, name) <= 0:
                    raise ConfigError(f"pool.{q}_{name}: must be > 0")
            if cp.sigma < 0:
                raise ConfigError(f"pool.{q}_sigma: must be >= 0")
            if not 0 <= cp.failure_prob <= 1:
                raise ConfigError(f"pool.{q}_failure_prob: must be in [0, 1]")
        try:
            self.pool.validate()
        except PoolConfigError as exc:
            raise ConfigError(f"pool: {exc}") from None
        if self.trace != "synthetic" and not Path(self.trace).is_file():
            raise ConfigError(f"scenario.trace: file not found: {self.trace}")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["policy"] = self.policy.value
        d["pool"]["class_params"] = {k: asdict(v) for k, v in self.pool.class_params.items()}
        return d

    def fingerprint(self) -> str:
        """Canonical text of every setting except the seed."""
        d = self.to_dict()
        d.pop("seed")
        d.pop("replications")
        return json.dumps(d, sort_keys=True)

    def with_(self, **kw) -> "ScenarioConfig":
        return replace(self, **kw)


_SCENARIO_KEYS = {
    "bus_count": int, "duration": float, "policy": SelectionPolicy.parse, "replications": int,
    "seed": int, "trace": str, "message_interval": float, "milestone_period": float,
    "payload_bytes": int,
}
_POOL_KEYS = {
    "size": int, "service_scale": float, "failure_load_factor": float, "rtt_low": float,
    "rtt_high": float, "unsynced_fraction": float, "no_remote_pow_fraction": float,
}
_CLASS_FIELDS = {"tip_median": float, "pow_median": float, "sigma": float, "failure_prob": float}
_ESTIMATOR_KEYS = {
    "alpha": float, "beta": float, "failure_penalty": float, "shared": "bool", "busy_threshold": int,
    "avoid_penalized": "bool",
}


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _convert(section, key, conv, raw):
    try:
        return _bool(raw) if conv == "bool" else conv(raw)
    except ValueError as exc:
        raise ConfigError(f"{section}.{key}: {exc}") from None


def parse_config(path=None, overrides=None) -> ScenarioConfig:
    """Defaults, then file values, then ``overrides`` (flag values, by scenario key)."""
    cfg = ScenarioConfig()
    pool = cfg.pool
    mix = pool.mix
    params = {q: asdict(cp) for q, cp in pool.class_params.items()}
    base_dir = None
    if path is not None:
        path = Path(path)
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        parser.optionxform = str
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        base_dir = path.parent
        unknown_sections = set(parser.sections()) - {"scenario", "pool", "estimator"}
        if unknown_sections:
            raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown_sections))}")
        if parser.has_section("scenario"):
            for key, raw in parser.items("scenario"):
                if key not in _SCENARIO_KEYS:
                    raise ConfigError(f"scenario.{key}: unknown key")
                setattr(cfg, key, _convert("scenario", key, _SCENARIO_KEYS[key], raw))
        if parser.has_section("pool"):
            for key, raw in parser.items("pool"):
                if key in _POOL_KEYS:
                    setattr(pool, key, _convert("pool", key, _POOL_KEYS[key], raw))
                elif key.startswith("mix_") and key[4:] in QUALITY_CLASSES:
                    if mix is pool.mix:
                        # an explicit mix replaces the default one entirely
                        mix = {q: 0.0 for q in QUALITY_CLASSES}
                    mix[key[4:]] = _convert("pool", key, float, raw)
                else:
                    q, _, name = key.partition("_")
                    if q not in QUALITY_CLASSES or name not in _CLASS_FIELDS:
                        raise ConfigError(f"pool.{key}: unknown key")
                    params[q][name] = _convert("pool", key, _CLASS_FIELDS[name], raw)
        if parser.has_section("estimator"):
            for key, raw in parser.items("estimator"):
                if key not in _ESTIMATOR_KEYS:
                    raise ConfigError(f"estimator.{key}: unknown key")
                setattr(cfg.estimator, key, _convert("estimator", key, _ESTIMATOR_KEYS[key], raw))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _SCENARIO_KEYS:
            raise ConfigError(f"unknown override {key}")
        setattr(cfg, key, _SCENARIO_KEYS[key](value) if not isinstance(value, SelectionPolicy) else value)
    pool.mix = dict(mix)
    pool.class_params = {q: ClassParams(**params[q]) for q in QUALITY_CLASSES}
    if cfg.trace != "synthetic" and base_dir is not None and not Path(cfg.trace).is_absolute():
        candidate = base_dir / cfg.trace
        if candidate.exists():
            cfg.trace = str(candidate)
    return cfg.validate()
