"""Bus agents: trace-driven publication schedules and full-node selection."""

import enum
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .stats import TxRecord

log = logging.getLogger(__name__)

DEFAULT_MESSAGE_INTERVAL = 80.0  # 45 messages per bus-hour


class TraceError(ValueError):
    pass


class SelectionPolicy(enum.Enum):
    FIXED_RANDOM = "fixed-random"
    DYNAMIC_RANDOM = "dynamic-random"
    ADAPTIVE_RTT = "adaptive-rtt"

    @classmethod
    def parse(cls, value) -> "SelectionPolicy":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        for p in cls:
            if p.value == key or p.name.lower().replace("_", "-") == key:
                return p
        raise ValueError(f"unknown policy {value!r}; expected one of {[p.value for p in cls]}")


@dataclass(frozen=True)
class TraceRecord:
    bus_id: str
    timestamp: float
    latitude: float
    longitude: float


def read_trace(path):
    """Parse ``bus_id,timestamp_seconds,lat,lon`` lines.

    Returns ``(records, skipped)``; malformed rows are counted, not fatal.
    """
    records = []
    skipped = 0
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise TraceError(f"cannot read trace {path}: {exc.strerror or exc}") from exc
    with fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 4:
                skipped += 1
                continue
            try:
                ts, lat, lon = float(parts[1]), float(parts[2]), float(parts[3])
            except ValueError:
                # header row or junk
                skipped += 1
                continue
            if not parts[0] or not (math.isfinite(ts) and -90 <= lat <= 90 and -180 <= lon <= 180):
                skipped += 1
                continue
            records.append(TraceRecord(parts[0], ts, lat, lon))
    return records, skipped


def schedule_from_fixes(times, duration, interval=DEFAULT_MESSAGE_INTERVAL) -> list:
    """Pick publication instants out of a bus's GPS fix times.

    One publication per ``interval`` slot, taken at the first fix at or after
    the slot start; slots with no fix are skipped.
    """
    times = sorted(t for t in times if 0 <= t < duration)
    if not times:
        return []
    out = []
    due = times[0]
    for t in times:
        if t >= due:
            out.append(t)
            due += interval * (1 + math.floor((t - due) / interval))
    return out


def load_traces(source, bus_count: int, duration: float, interval=DEFAULT_MESSAGE_INTERVAL) -> dict:
    """Map bus id to its publication schedule, using the first ``bus_count`` buses (sorted by id)."""
    if bus_count < 0:
        raise TraceError("bus_count must be >= 0")
    records, skipped = read_trace(source)
    if skipped:
        log.warning("%s: skipped %d malformed trace rows", source, skipped)
    fixes: dict = {}
    for r in records:
        fixes.setdefault(r.bus_id, []).append(r.timestamp)
    if len(fixes) < bus_count:
        raise TraceError(f"trace {source} has {len(fixes)} buses, {bus_count} requested")
    chosen = sorted(fixes)[:bus_count]
    if duration <= 0:
        return {b: [] for b in chosen}
    return {b: schedule_from_fixes(fixes[b], duration, interval) for b in chosen}


def synthetic_schedules(bus_count, duration, streams, rate_per_hour=45.0) -> dict:
    """Poisson publication times, one independent stream per bus."""
    out = {}
    for i in range(bus_count):
        bus_id = f"bus{i:04d}"
        rng = streams.get(f"bus/{bus_id}/arrivals")
        t, times = 0.0, []
        while True:
            t += rng.expovariate(rate_per_hour / 3600.0)
            if t >= duration:
                break
            times.append(t)
        out[bus_id] = times
    return out


def write_synthetic_trace(path, bus_count, duration, rng, fix_interval=20.0,
                          center=(-22.90, -43.20), step_deg=0.0015):
    """Write a random-walk GPS trace in the ingestion format (for demos and tests)."""
    lines = ["# bus_id,timestamp_seconds,lat,lon"]
    for i in range(bus_count):
        lat = center[0] + rng.uniform(-0.1, 0.1)
        lon = center[1] + rng.uniform(-0.15, 0.15)
        t = rng.uniform(0, fix_interval)
        while t < duration:
            lines.append(f"bus{i:04d},{t:.3f},{lat:.6f},{lon:.6f}")
            lat += rng.gauss(0, step_deg)
            lon += rng.gauss(0, step_deg)
            t += fix_interval * rng.uniform(0.5, 1.5)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


class RttEstimator:
    """Jacobson-style smoothed RTT per node.

    The deviation is updated with the old estimate before the estimate
    itself moves.
    """

    def __init__(self, alpha=0.125, beta=0.25):
        self.alpha = alpha
        self.beta = beta
        self.records: dict = {}

    def update(self, node_id, sample):
        if not sample > 0:
            raise ValueError(f"RTT sample must be > 0, got {sample}")
        rec = self.records.get(node_id)
        if rec is None:
            self.records[node_id] = [sample, sample / 2.0, 1]
            return
        srtt, rttvar, n = rec
        rttvar = (1 - self.beta) * rttvar + self.beta * abs(srtt - sample)
        srtt = (1 - self.alpha) * srtt + self.alpha * sample
        rec[0], rec[1], rec[2] = srtt, rttvar, n + 1

    def penalize(self, node_id, penalty):
        rec = self.records.get(node_id)
        if rec is None:
            self.records[node_id] = [penalty, penalty / 2.0, 1]
        else:
            rec[0] = max(rec[0], penalty)
            rec[2] += 1

    def srtt(self, node_id) -> Optional[float]:
        rec = self.records.get(node_id)
        return rec[0] if rec else None

    def rttvar(self, node_id) -> Optional[float]:
        rec = self.records.get(node_id)
        return rec[1] if rec else None

    def samples(self, node_id) -> int:
        rec = self.records.get(node_id)
        return rec[2] if rec else 0

    def known(self) -> list:
        return [k for k, r in self.records.items() if r[2] >= 1]


def update_rtt(estimator: RttEstimator, node_id, sample):
    estimator.update(node_id, sample)


@dataclass
class BusAgent:
    bus_id: str
    channel: object
    publish_schedule: list
    assigned_node: Optional[int] = None
    pending_request: object = None
    deferred: deque = field(default_factory=deque)
    published: int = 0
    estimator: Optional[RttEstimator] = None


def _uniform(seq, rng):
    return seq[int(rng.random() * len(seq))]


def select_node_fixed_random(bus: BusAgent, pool, rng) -> int:
    if bus.assigned_node is None:
        bus.assigned_node = _uniform(pool, rng)
    return bus.assigned_node


def select_node_dynamic_random(pool, rng) -> int:
    return _uniform(pool, rng)


def select_node_adaptive_rtt(bus, estimator: RttEstimator, pool, busy_set, rng, avoid_at=None) -> int:
    """Best known idle node by smoothed RTT, else a random idle node.

    Ties on srtt go to the earlier node in ``pool`` order. With ``avoid_at``
    set, nodes whose srtt has reached that value (the failure penalty) are
    left out of the ranking, so a random pick is preferred over them.
    """
    best, best_srtt = None, math.inf if avoid_at is None else avoid_at
    recs = estimator.records
    for node_id in pool:
        rec = recs.get(node_id)
        if rec is not None and node_id not in busy_set and rec[0] < best_srtt:
            best, best_srtt = node_id, rec[0]
    if best is not None:
        return best
    idle = [n for n in pool if n not in busy_set]
    return _uniform(idle or list(pool), rng)


def on_outcome(bus: BusAgent, outcome, policy: SelectionPolicy, estimator, penalty=300.0,
               replication_index=0, bus_count=0) -> TxRecord:
    """Close the bus's pending request and turn the outcome into a record."""
    req = bus.pending_request
    if req is None or req.request_id != outcome.request_id:
        raise RuntimeError(f"{bus.bus_id}: outcome {outcome.request_id} does not match pending request")
    bus.pending_request = None
    if policy is SelectionPolicy.ADAPTIVE_RTT and estimator is not None:
        if outcome.success:
            estimator.update(outcome.node_id, outcome.total_latency)
        else:
            estimator.penalize(outcome.node_id, penalty)
    return TxRecord(
        bus_id=bus.bus_id,
        node_id=outcome.node_id,
        policy=policy.value,
        submit_time=req.submit_time,
        success=outcome.success,
        tip_selection_latency=outcome.tip_selection_latency,
        pow_latency=outcome.pow_latency,
        network_latency=outcome.network_latency,
        total_latency=outcome.total_latency,
        replication_index=replication_index,
        queue_wait=outcome.queue_wait,
        message_index=req.message_index,
        bus_count=bus_count,
    )
