"""Simulated full nodes: heterogeneous service times, failures and FIFO queues.

A node serves one attach request at a time. Serving a request means tip
selection followed by one PoW per bundle transaction, after which the three
transactions are attached to the shared Tangle. Requests may instead fail
after a partial service (the tip selection draw) with a probability that
grows with the node's backlog.
"""

import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from .engine import EventKind, Simulator

QUALITY_CLASSES = ("good", "mediocre", "bad")


class PoolConfigError(ValueError):
    pass


def to_us(seconds: float) -> int:
    """Durations are kept on an integer microsecond grid so sums are exact."""
    return int(round(seconds * 1e6))


@dataclass(frozen=True)
class Distribution:
    """Service-time law. ``lognormal`` is parameterised by median and sigma."""

    family: str
    a: float
    b: float = 0.0

    def __post_init__(self):
        if self.family not in ("lognormal", "constant", "exponential"):
            raise ValueError(f"unknown distribution family {self.family!r}")
        if self.a <= 0:
            raise ValueError("distribution scale must be > 0")
        if self.family == "lognormal" and self.b < 0:
            raise ValueError("lognormal sigma must be >= 0")

    def sample(self, rng) -> float:
        if self.family == "constant":
            return self.a
        if self.family == "exponential":
            return rng.expovariate(1.0 / self.a)
        return self.a * math.exp(self.b * rng.gauss(0.0, 1.0))

    @property
    def mean(self) -> float:
        if self.family == "lognormal":
            return self.a * math.exp(0.5 * self.b**2)
        return self.a

    def scaled(self, k: float) -> "Distribution":
        return Distribution(self.family, self.a * k, self.b)


@dataclass(frozen=True)
class NodeProfile:
    tip_selection_time: Distribution
    pow_time_per_tx: Distribution
    failure_prob: float
    is_synced: bool = True
    allows_remote_pow: bool = True
    base_rtt: float = 0.1
    quality_class: str = "good"

    def __post_init__(self):
        if not 0.0 <= self.failure_prob <= 1.0:
            raise ValueError("failure_prob must be in [0, 1]")
        if self.base_rtt < 0:
            raise ValueError("base_rtt must be >= 0")

    @property
    def mean_service_time(self) -> float:
        return self.tip_selection_time.mean + 3 * self.pow_time_per_tx.mean


@dataclass(frozen=True)
class ClassParams:
    tip_median: float
    pow_median: float
    sigma: float
    failure_prob: float


DEFAULT_CLASS_PARAMS = {
    "good": ClassParams(tip_median=2.0, pow_median=6.0, sigma=0.5, failure_prob=0.001),
    "mediocre": ClassParams(tip_median=12.0, pow_median=36.0, sigma=0.8, failure_prob=0.08),
    "bad": ClassParams(tip_median=20.0, pow_median=60.0, sigma=1.0, failure_prob=0.25),
}


@dataclass
class PoolConfig:
    size: int = 60
    mix: dict = field(default_factory=lambda: {"good": 0.25, "mediocre": 0.50, "bad": 0.25})
    class_params: dict = field(default_factory=lambda: dict(DEFAULT_CLASS_PARAMS))
    service_scale: float = 1.0
    failure_load_factor: float = 1.0
    rtt_low: float = 0.05
    rtt_high: float = 0.5
    unsynced_fraction: float = 0.0
    no_remote_pow_fraction: float = 0.0

    def validate(self):
        if self.size < 1:
            raise PoolConfigError("pool size must be >= 1")
        if set(self.mix) - set(QUALITY_CLASSES):
            raise PoolConfigError(f"unknown quality classes {sorted(set(self.mix) - set(QUALITY_CLASSES))}")
        if any(v < 0 for v in self.mix.values()) or not math.isclose(sum(self.mix.values()), 1.0, abs_tol=1e-9):
            raise PoolConfigError(f"class mix must be non-negative and sum to 1, got {self.mix}")
        if self.service_scale <= 0:
            raise PoolConfigError("service_scale must be > 0")
        if self.failure_load_factor < 0:
            raise PoolConfigError("failure_load_factor must be >= 0")
        if not 0 < self.rtt_low <= self.rtt_high:
            raise PoolConfigError("need 0 < rtt_low <= rtt_high")
        for name in ("unsynced_fraction", "no_remote_pow_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise PoolConfigError(f"{name} must be in [0, 1]")

    def profile_for(self, quality: str, base_rtt: float) -> NodeProfile:
        cp = self.class_params[quality]
        k = self.service_scale
        return NodeProfile(
            tip_selection_time=Distribution("lognormal", cp.tip_median * k, cp.sigma),
            pow_time_per_tx=Distribution("lognormal", cp.pow_median * k, cp.sigma),
            failure_prob=cp.failure_prob,
            base_rtt=base_rtt,
            quality_class=quality,
        )


@dataclass
class FullNode:
    id: int
    profile: NodeProfile
    queue: deque = field(default_factory=deque)
    busy: bool = False
    served: int = 0
    failed: int = 0

    @property
    def load(self) -> int:
        return len(self.queue) + int(self.busy)


@dataclass
class AttachRequest:
    request_id: int
    bus_id: str
    bundle: object
    submit_time: float
    node_id: int = -1
    message_index: int = 0
    arrival_time: float = 0.0
    uplink_us: int = 0
    wait_us: int = 0
    tip_us: int = 0
    pow_us: int = 0


@dataclass(frozen=True)
class AttachOutcome:
    request_id: int
    node_id: int
    success: bool
    tip_selection_latency: Optional[float]
    pow_latency: Optional[float]
    network_latency: Optional[float]
    total_latency: float
    completion_time: float
    queue_wait: float = 0.0
    tx_ids: tuple = ()


def _largest_remainder(size, mix):
    raw = {c: size * mix.get(c, 0.0) for c in QUALITY_CLASSES}
    counts = {c: int(math.floor(v)) for c, v in raw.items()}
    left = size - sum(counts.values())
    for c in sorted(QUALITY_CLASSES, key=lambda c: (-(raw[c] - counts[c]), QUALITY_CLASSES.index(c)))[:left]:
        counts[c] += 1
    return counts


def build_pool(config: PoolConfig, rng) -> list:
    """Draw a public node list. Class counts follow the mix exactly (largest remainder)."""
    config.validate()
    counts = _largest_remainder(config.size, config.mix)
    classes = [c for c in QUALITY_CLASSES for _ in range(counts[c])]
    rng.shuffle(classes)
    pool = []
    for i, quality in enumerate(classes):
        rtt = rng.uniform(config.rtt_low, config.rtt_high)
        profile = config.profile_for(quality, rtt)
        synced = rng.random() >= config.unsynced_fraction
        remote = rng.random() >= config.no_remote_pow_fraction
        if not (synced and remote):
            profile = replace(profile, is_synced=synced, allows_remote_pow=remote)
        pool.append(FullNode(i, profile))
    return pool


def filter_pool(pool: list) -> list:
    """Keep synchronised nodes that accept remote PoW, preserving order."""
    return [n for n in pool if n.profile.is_synced and n.profile.allows_remote_pow]


def effective_failure_prob(node: FullNode, queue_len: int, load_factor: float = 0.5) -> float:
    if queue_len < 0:
        raise ValueError("queue_len must be >= 0")
    return min(1.0, node.profile.failure_prob * (1.0 + load_factor * queue_len))


class NodeNetwork:
    """Event-driven behaviour of the node pool inside one scenario run.

    ``deliver`` is called with each :class:`AttachOutcome` once the response
    reaches the client. ``attach_bundle`` performs the ledger write and
    returns the new transaction ids.
    """

    def __init__(self, sim: Simulator, nodes: list, streams, attach_bundle: Callable, deliver: Callable,
                 load_factor: float = 0.5):
        self.sim = sim
        self.nodes = {n.id: n for n in nodes}
        self.streams = streams
        self.attach_bundle = attach_bundle
        self.deliver = deliver
        self.load_factor = load_factor
        self._pending: dict[int, AttachRequest] = {}
        sim.on(EventKind.REQUEST_ARRIVAL, self._on_arrival)
        sim.on(EventKind.NODE_TIP_SELECTION_DONE, self._on_tip_done)
        sim.on(EventKind.NODE_POW_DONE, self._on_pow_done)
        sim.on(EventKind.REQUEST_FAILED, self._on_failed)
        sim.on(EventKind.OUTCOME_DELIVERED, self._on_delivered)

    def _rng(self, node_id):
        return self.streams.get(f"node/{node_id}")

    def _one_way_us(self, node):
        mean = node.profile.base_rtt / 2.0
        if mean <= 0:
            return 0
        return to_us(self._rng(node.id).expovariate(1.0 / mean))

    def submit(self, node_id: int, req: AttachRequest):
        if len(req.bundle.payloads) != 3:
            raise ValueError("attach request must carry a 3-transaction bundle")
        node = self.nodes[node_id]
        req.node_id = node_id
        req.submit_time = self.sim.now
        req.uplink_us = self._one_way_us(node)
        self._pending[req.request_id] = req
        return self.sim.after(req.uplink_us / 1e6, EventKind.REQUEST_ARRIVAL,
                              node_id=node_id, request_id=req.request_id, bus_id=req.bus_id)

    def outstanding(self, node_id) -> int:
        return self.nodes[node_id].load

    def _on_arrival(self, ev):
        node = self.nodes[ev.node_id]
        req = self._pending[ev.request_id]
        req.arrival_time = self.sim.now
        node.queue.append(req)
        if not node.busy:
            self._start_next(node)

    def _start_next(self, node: FullNode):
        if not node.queue:
            node.busy = False
            return
        node.busy = True
        req = node.queue.popleft()
        req.wait_us = to_us(self.sim.now - req.arrival_time)
        rng = self._rng(node.id)
        p = effective_failure_prob(node, len(node.queue), self.load_factor)
        req.tip_us = to_us(node.profile.tip_selection_time.sample(rng))
        kw = dict(node_id=node.id, request_id=req.request_id, bus_id=req.bus_id)
        if rng.random() < p:
            self.sim.after(req.tip_us / 1e6, EventKind.REQUEST_FAILED, **kw)
        else:
            self.sim.after(req.tip_us / 1e6, EventKind.NODE_TIP_SELECTION_DONE, **kw)

    def _on_tip_done(self, ev):
        node = self.nodes[ev.node_id]
        req = self._pending[ev.request_id]
        rng = self._rng(node.id)
        req.pow_us = sum(to_us(node.profile.pow_time_per_tx.sample(rng)) for _ in range(3))
        self.sim.after(req.pow_us / 1e6, EventKind.NODE_POW_DONE,
                       node_id=node.id, request_id=req.request_id, bus_id=req.bus_id)

    def _finish(self, node, req, success, tx_ids=()):
        down = self._one_way_us(node)
        net = req.uplink_us + down
        tip = req.wait_us + req.tip_us
        if success:
            node.served += 1
            total = net + tip + req.pow_us
            outcome = dict(success=True, tip_selection_latency=tip / 1e6, pow_latency=req.pow_us / 1e6,
                           network_latency=net / 1e6)
        else:
            node.failed += 1
            total = net + tip
            outcome = dict(success=False, tip_selection_latency=None, pow_latency=None, network_latency=None)
        outcome.update(request_id=req.request_id, node_id=node.id, total_latency=total / 1e6,
                       queue_wait=req.wait_us / 1e6, tx_ids=tuple(tx_ids))
        self.sim.after(down / 1e6, EventKind.OUTCOME_DELIVERED, node_id=node.id,
                       request_id=req.request_id, bus_id=req.bus_id, data=outcome)
        self._start_next(node)

    def _on_pow_done(self, ev):
        node = self.nodes[ev.node_id]
        req = self._pending[ev.request_id]
        tx_ids = self.attach_bundle(req, self._rng(node.id))
        self._finish(node, req, True, tx_ids)

    def _on_failed(self, ev):
        node = self.nodes[ev.node_id]
        self._finish(node, self._pending[ev.request_id], False)

    def _on_delivered(self, ev):
        self._pending.pop(ev.request_id)
        outcome = AttachOutcome(completion_time=self.sim.now, **ev.data)
        self.deliver(outcome)
