"""Discrete-event core: virtual clock, ordered event queue and seeded RNG streams."""

import enum
import hashlib
import heapq
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Optional


class EventKind(enum.Enum):
    BUS_PUBLISH = "BusPublish"
    REQUEST_ARRIVAL = "RequestArrival"
    NODE_TIP_SELECTION_DONE = "NodeTipSelectionDone"
    NODE_POW_DONE = "NodePowDone"
    REQUEST_FAILED = "RequestFailed"
    OUTCOME_DELIVERED = "OutcomeDelivered"
    MILESTONE_TICK = "MilestoneTick"
    SCENARIO_END = "ScenarioEnd"


@dataclass(order=False)
class SimEvent:
    fire_time: float
    kind: EventKind
    bus_id: Optional[str] = None
    node_id: Optional[int] = None
    request_id: Optional[int] = None
    data: Any = None
    sequence_no: int = -1


class SchedulingError(RuntimeError):
    """Raised when an event would fire before the current virtual time."""


class SimClock:
    def __init__(self, horizon=3600.0):
        self.now = 0.0
        self.horizon = float(horizon)

    def advance(self, t):
        if t < self.now:
            raise SchedulingError(f"clock regression: {t} < {self.now}")
        self.now = t


class Simulator:
    """Single-threaded event loop.

    Events are dispatched by ``(fire_time, sequence_no)``; the sequence number
    is assigned at insertion so simultaneous events keep insertion order.
    Handlers are registered per :class:`EventKind`.
    """

    def __init__(self, horizon=3600.0):
        self.clock = SimClock(horizon)
        self._heap = []
        self._seq = 0
        self._handlers: dict[EventKind, Callable[[SimEvent], None]] = {}
        self.dispatched = 0

    @property
    def now(self):
        return self.clock.now

    def __len__(self):
        return len(self._heap)

    def on(self, kind, handler):
        self._handlers[kind] = handler

    def schedule(self, event: SimEvent) -> SimEvent:
        if event.fire_time < self.clock.now:
            raise SchedulingError(
                f"cannot schedule {event.kind.value} at t={event.fire_time} (now={self.clock.now})"
            )
        event.sequence_no = self._seq
        self._seq += 1
        heapq.heappush(self._heap, (event.fire_time, event.sequence_no, event))
        return event

    def at(self, t, kind, **kw) -> SimEvent:
        return self.schedule(SimEvent(t, kind, **kw))

    def after(self, delay, kind, **kw) -> SimEvent:
        return self.schedule(SimEvent(self.clock.now + delay, kind, **kw))

    def pop(self) -> SimEvent:
        _, _, event = heapq.heappop(self._heap)
        self.clock.advance(event.fire_time)
        self.dispatched += 1
        return event

    def run(self, until=None):
        """Dispatch events until the queue drains (or ``until`` is passed)."""
        while self._heap:
            if until is not None and self._heap[0][0] > until:
                break
            event = self.pop()
            handler = self._handlers.get(event.kind)
            if handler is not None:
                handler(event)


def stream_seed(seed: int, label: str) -> int:
    # sha256 rather than hash(): str hashing is salted per process
    digest = hashlib.sha256(f"{int(seed)}/{label}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def rng_stream(seed: int, label: str) -> random.Random:
    """Independent, reproducible random stream for one simulation entity."""
    return random.Random(stream_seed(seed, label))


@dataclass
class RngStreams:
    """Lazily created named sub-streams sharing one base seed."""

    seed: int
    _streams: dict = field(default_factory=dict)

    def get(self, label: str) -> random.Random:
        rng = self._streams.get(label)
        if rng is None:
            rng = self._streams[label] = rng_stream(self.seed, label)
        return rng
