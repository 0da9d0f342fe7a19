"""Flooding baseline with a message cache and TTL.

A broadcast is realised as one unicast data session per neighbor. A relay
waits for the broadcast timer after the first copy of a message, collects
every sender of duplicate copies in that window, then forwards once to all
other neighbors.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable

from .packets import FloodMessage
from .routing import Send

ABSORB = "absorb"
DROP = "drop"
HOLD = "hold"
COALESCED = "coalesced"


class FloodCache:
    """Bounded set of seen ``(origin, seq)`` keys, oldest evicted first."""

    def __init__(self, capacity: int = 64):
        if capacity < 1:
            raise ValueError("cache capacity must be positive")
        self.capacity = capacity
        self._seen: OrderedDict[tuple[int, int], None] = OrderedDict()
        self.evictions = 0

    def __contains__(self, key: tuple[int, int]) -> bool:
        return key in self._seen

    def __len__(self) -> int:
        return len(self._seen)

    def add(self, key: tuple[int, int]) -> None:
        if key in self._seen:
            return
        self._seen[key] = None
        while len(self._seen) > self.capacity:
            self._seen.popitem(last=False)
            self.evictions += 1


@dataclass
class _Held:
    msg: FloodMessage
    senders: set[int] = field(default_factory=set)


class FloodAgent:
    def __init__(self, node_id: int, neighbors: Callable[[], Iterable[int]], cache_capacity: int = 64):
        self.node_id = node_id
        self._neighbors = neighbors
        self.cache = FloodCache(cache_capacity)
        self.held: dict[tuple[int, int], _Held] = {}
        self.forwarded: dict[tuple[int, int], int] = {}
        self.absorbed: list[FloodMessage] = []

    def originate(self, msg: FloodMessage) -> list[Send]:
        if msg.ttl < 1:
            raise ValueError("flood TTL must be at least 1")
        self.cache.add(msg.key)
        self.forwarded[msg.key] = self.forwarded.get(msg.key, 0) + 1
        return [Send(n, msg) for n in sorted(self._neighbors())]

    def on_receive(self, msg: FloodMessage, sender: int) -> str:
        key = msg.key
        if msg.dest == self.node_id:
            if key in self.cache:
                return DROP
            self.cache.add(key)
            self.absorbed.append(msg)
            return ABSORB
        held = self.held.get(key)
        if held is not None:
            held.senders.add(sender)
            return COALESCED
        if key in self.cache:
            return DROP
        self.cache.add(key)
        if msg.ttl <= 0:
            return DROP
        self.held[key] = _Held(msg, {sender})
        return HOLD

    def release(self, key: tuple[int, int]) -> list[Send]:
        """Broadcast timer expired: forward once to every neighbor that has not sent a copy."""
        held = self.held.pop(key, None)
        if held is None:
            return []
        assert key not in self.forwarded, "message forwarded twice"
        self.forwarded[key] = 1
        out = replace(held.msg, ttl=held.msg.ttl - 1)
        return [Send(n, out) for n in sorted(self._neighbors()) if n not in held.senders]
