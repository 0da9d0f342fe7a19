"""Deterministic discrete-event scheduler.

Time is an integer number of microseconds since the start of the run.
Events are ordered by ``(fire_at, seq)`` where ``seq`` is the insertion
counter, so two events scheduled for the same instant fire in the order
they were scheduled.
"""

from __future__ import annotations

import enum
import heapq
import zlib
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

US_PER_MS = 1_000
US_PER_S = 1_000_000


def seconds(value: float) -> int:
    """Convert seconds to integer simulation ticks (µs)."""
    return int(round(value * US_PER_S))


def millis(value: float) -> int:
    return int(round(value * US_PER_MS))


def to_seconds(ticks: int) -> float:
    return ticks / US_PER_S


class EventKind(enum.Enum):
    WAKE = "wake"
    ADV_TX_START = "adv-tx-start"
    ADV_TX_END = "adv-tx-end"
    ADV_SLOT_END = "adv-slot-end"
    SCAN_WINDOW_START = "scan-window-start"
    SCAN_CHANNEL_SWITCH = "scan-channel-switch"
    TIMER_DISCOVERY = "timer-expiry-discovery"
    TIMER_RECONNECTION = "timer-expiry-reconnection"
    TIMER_BROADCAST = "timer-expiry-broadcast"
    TIMER_FAILURE = "timer-expiry-failure"
    PACKET_ARRIVAL = "packet-arrival"
    SESSION_DATA = "session-data"
    SESSION_ACK = "session-ack"
    RETRANSMIT = "retransmit"
    TRAFFIC = "traffic"
    FAILURE_INJECT = "failure-inject"
    GENERIC = "generic"


class SchedulingError(ValueError):
    """Raised when an event is scheduled before the current time."""


@dataclass(order=True)
class SimEvent:
    fire_at: int
    seq: int
    target: int = field(compare=False, default=-1)
    kind: EventKind = field(compare=False, default=EventKind.GENERIC)
    callback: Callable[["SimEvent"], Any] | None = field(compare=False, default=None, repr=False)
    payload: Any = field(compare=False, default=None, repr=False)
    cancelled: bool = field(compare=False, default=False, repr=False)
    fired: bool = field(compare=False, default=False, repr=False)


class Simulator:
    """Single-threaded event loop.

    ``trace`` keeps an ordered log of ``(fire_at, seq, target, kind)`` for
    every dispatched event; replays with the same seed produce identical logs.
    """

    def __init__(self, trace: bool = False):
        self._queue: list[SimEvent] = []
        self._seq = 0
        self._now = 0
        self.trace = trace
        self.log: list[tuple[int, int, int, str]] = []
        self.dispatched = 0

    def now(self) -> int:
        return self._now

    def schedule(
        self,
        fire_at: int,
        callback: Callable[[SimEvent], Any] | None = None,
        *,
        target: int = -1,
        kind: EventKind = EventKind.GENERIC,
        payload: Any = None,
    ) -> SimEvent:
        fire_at = int(fire_at)
        if fire_at < self._now:
            raise SchedulingError(
                f"cannot schedule {kind.value} at t={fire_at}us, now is {self._now}us"
            )
        event = SimEvent(fire_at, self._seq, target, kind, callback, payload)
        self._seq += 1
        heapq.heappush(self._queue, event)
        return event

    def schedule_in(self, delay: int, callback=None, **kwargs) -> SimEvent:
        return self.schedule(self._now + int(delay), callback, **kwargs)

    def cancel(self, handle: SimEvent | None) -> bool:
        if handle is None or handle.cancelled or handle.fired:
            return False
        handle.cancelled = True
        return True

    def pending(self) -> int:
        return sum(1 for e in self._queue if not e.cancelled)

    def peek(self) -> int | None:
        while self._queue and self._queue[0].cancelled:
            heapq.heappop(self._queue)
        return self._queue[0].fire_at if self._queue else None

    def run_until(self, end: int) -> int:
        """Dispatch every pending event with ``fire_at <= end``."""
        count = 0
        last = None
        queue = self._queue
        while queue:
            event = queue[0]
            if event.fire_at > end:
                break
            heapq.heappop(queue)
            if event.cancelled:
                continue
            if last is not None:
                assert (event.fire_at, event.seq) > last, "event dispatched out of order"
            last = (event.fire_at, event.seq)
            assert event.fire_at >= self._now
            self._now = event.fire_at
            event.fired = True
            if self.trace:
                self.log.append((event.fire_at, event.seq, event.target, event.kind.value))
            if event.callback is not None:
                event.callback(event)
            count += 1
        self.dispatched += count
        return count


class RngStreams:
    """Seeded random streams, one per node plus named auxiliary streams.

    Each substream is derived from the master seed and a fixed spawn key, so
    adding a node never perturbs the draws of another node.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._cache: dict[tuple[int, int], np.random.Generator] = {}

    def _get(self, key: tuple[int, int]) -> np.random.Generator:
        gen = self._cache.get(key)
        if gen is None:
            ss = np.random.SeedSequence(entropy=self.seed, spawn_key=key)
            gen = np.random.default_rng(ss)
            self._cache[key] = gen
        return gen

    def node(self, node_id: int) -> np.random.Generator:
        return self._get((0, int(node_id)))

    def stream(self, name: str) -> np.random.Generator:
        return self._get((1, zlib.crc32(name.encode("utf-8"))))
