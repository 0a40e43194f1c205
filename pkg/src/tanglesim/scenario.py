"""One scenario run: buses publishing MAM bundles through the node pool into the Tangle."""

import hashlib
from dataclasses import dataclass, field

from . import mam
from .config import ConfigError, ScenarioConfig
from .engine import EventKind, RngStreams, Simulator
from .harness import (
    BusAgent, RttEstimator, SelectionPolicy, load_traces, on_outcome, select_node_adaptive_rtt,
    select_node_dynamic_random, select_node_fixed_random, synthetic_schedules,
)
from .nodes import AttachRequest, NodeNetwork, build_pool, filter_pool
from .tangle import Tangle


@dataclass
class RunResult:
    config: ScenarioConfig
    seed: int
    replication_index: int
    records: list
    node_classes: dict = field(default_factory=dict)
    tangle_size: int = 0
    milestones: int = 0
    confirmed_bundles: int = 0
    end_time: float = 0.0
    events: int = 0

    @property
    def attempts(self) -> int:
        return len(self.records)

    @property
    def successes(self) -> int:
        return sum(1 for r in self.records if r.success)

    @property
    def failures(self) -> int:
        return self.attempts - self.successes


class _Harness:
    def __init__(self, config: ScenarioConfig, seed: int, replication_index: int):
        self.config = config
        self.seed = seed
        self.rep = replication_index
        self.streams = RngStreams(seed)
        self.sim = Simulator(horizon=config.duration)
        self.tangle = Tangle()

        pool = build_pool(config.pool, self.streams.get("pool"))
        eligible = filter_pool(pool)
        if not eligible:
            raise ConfigError("no eligible nodes after pool filtering")
        self.pool_ids = [n.id for n in eligible]
        self.node_classes = {n.id: n.profile.quality_class for n in eligible}
        self.network = NodeNetwork(self.sim, eligible, self.streams, self._attach_bundle, self._deliver,
                                   load_factor=config.pool.failure_load_factor)

        if config.trace == "synthetic":
            schedules = synthetic_schedules(config.bus_count, config.duration, self.streams,
                                            rate_per_hour=3600.0 / config.message_interval)
        else:
            schedules = load_traces(config.trace, config.bus_count, config.duration, config.message_interval)

        self.policy = config.policy
        est = config.estimator
        self.shared_estimator = RttEstimator(est.alpha, est.beta)
        self.buses = {}
        for bus_id, times in schedules.items():
            owner = hashlib.sha256(f"{seed}/{bus_id}/owner".encode()).digest()
            key = mam.ChannelKey.from_seed(owner + b"/key")
            bus = BusAgent(bus_id, mam.create_channel(owner, key), list(times))
            if not est.shared:
                bus.estimator = RttEstimator(est.alpha, est.beta)
            self.buses[bus_id] = bus
            for i, t in enumerate(times):
                self.sim.at(t, EventKind.BUS_PUBLISH, bus_id=bus_id, data=i)

        self.outstanding = {n: 0 for n in self.pool_ids}
        self.busy = set()
        self.requests = {}
        self.bundle_tx = {}
        self.records = []
        self._next_request = 0

        self.sim.on(EventKind.BUS_PUBLISH, self._on_publish)
        self.sim.on(EventKind.MILESTONE_TICK, self._on_milestone)
        self.sim.at(config.milestone_period, EventKind.MILESTONE_TICK)
        self.sim.at(config.duration, EventKind.SCENARIO_END)

    # -- events ------------------------------------------------------------

    def _on_publish(self, ev):
        bus = self.buses[ev.bus_id]
        if bus.pending_request is not None:
            bus.deferred.append(ev.data)
        else:
            self._send(bus, ev.data)

    def _on_milestone(self, ev):
        self.tangle.issue_milestone(self.sim.now, self.streams.get("coordinator"))
        if self.sim.now + self.config.milestone_period <= self.config.duration or self.requests:
            self.sim.after(self.config.milestone_period, EventKind.MILESTONE_TICK)

    def _choose(self, bus):
        rng = self.streams.get(f"bus/{bus.bus_id}/select")
        if self.policy is SelectionPolicy.FIXED_RANDOM:
            return select_node_fixed_random(bus, self.pool_ids, rng)
        if self.policy is SelectionPolicy.DYNAMIC_RANDOM:
            return select_node_dynamic_random(self.pool_ids, rng)
        est = bus.estimator or self.shared_estimator
        avoid = self.config.estimator.failure_penalty if self.config.estimator.avoid_penalized else None
        return select_node_adaptive_rtt(bus, est, self.pool_ids, self.busy, rng, avoid)

    def _send(self, bus: BusAgent, slot: int):
        node_id = self._choose(bus)
        text = f"{bus.bus_id}|{slot}|{self.sim.now:.3f}|".encode()
        text = text.ljust(self.config.payload_bytes, b".")
        bundle, bus.channel = mam.prepare_bundle(bus.channel, text, self.sim.now)
        req = AttachRequest(self._next_request, bus.bus_id, bundle, self.sim.now,
                            message_index=bus.channel.message_index - 1)
        self._next_request += 1
        bus.pending_request = req
        bus.published += 1
        self.requests[req.request_id] = bus
        self.outstanding[node_id] += 1
        if self.outstanding[node_id] >= self.config.estimator.busy_threshold:
            self.busy.add(node_id)
        self.network.submit(node_id, req)

    def _attach_bundle(self, req, rng):
        ids = []
        for payload in mam.bundle_tx_payloads(req.bundle):
            trunk, branch = self.tangle.select_tips(rng)
            ids.append(self.tangle.attach(payload, trunk, branch, self.sim.now))
        self.bundle_tx[req.request_id] = ids
        return ids

    def _deliver(self, outcome):
        bus = self.requests.pop(outcome.request_id)
        n = outcome.node_id
        self.outstanding[n] -= 1
        if self.outstanding[n] < self.config.estimator.busy_threshold:
            self.busy.discard(n)
        est = bus.estimator or self.shared_estimator
        self.records.append(on_outcome(
            bus, outcome, self.policy, est, self.config.estimator.failure_penalty,
            replication_index=self.rep, bus_count=self.config.bus_count,
        ))
        if bus.deferred:
            self._send(bus, bus.deferred.popleft())

    def run(self) -> RunResult:
        self.sim.run()
        confirmed = self.tangle.confirmed_set()
        n_conf = sum(1 for ids in self.bundle_tx.values() if all(i in confirmed for i in ids))
        return RunResult(
            config=self.config, seed=self.seed, replication_index=self.rep, records=self.records,
            node_classes=self.node_classes, tangle_size=len(self.tangle),
            milestones=len(self.tangle.milestones), confirmed_bundles=n_conf,
            end_time=self.sim.now, events=self.sim.dispatched,
        )


def run_scenario(config: ScenarioConfig, seed: int = None, replication_index: int = 0) -> RunResult:
    """Simulate one replication. The result depends only on ``(config, seed)``."""
    if seed is None:
        seed = config.seed
    return _Harness(config, seed, replication_index).run()
