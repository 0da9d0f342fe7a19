"""Hop-count neighbor discovery.

Every node starts with an undefined hop-count (0xFF) except heads, which
hold 0. A node listens for advertisements; the first valid one starts the
discovery timer and sets ``my_hop = adv_hop + 1``. Every later *new*
advertisement resets the timer and can only lower ``my_hop``. Discovery
stops when the timer expires.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

UNDEFINED_HOP = 0xFF
DIGEST_CAP = 20


@dataclass(frozen=True)
class AdvPayload:
    sender: int
    hop: int
    digest: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if not 0 <= self.hop <= UNDEFINED_HOP:
            raise ValueError(f"hop-count {self.hop} out of range")


@dataclass
class NeighborEntry:
    id: int
    hop: int
    rssi: float
    digest: tuple[tuple[int, int], ...] = ()
    updated_at: int = 0


def make_digest(entries: Iterable[NeighborEntry], cap: int = DIGEST_CAP) -> tuple[tuple[int, int], ...]:
    ordered = sorted(((e.hop, e.id) for e in entries))
    return tuple((nid, hop) for hop, nid in ordered[:cap])


class Discovery:
    """Per-node discovery state machine.

    ``on_adv`` returns ``"start"`` or ``"reset"`` when the caller must
    (re)arm the discovery timer, ``None`` otherwise.
    """

    def __init__(self, node_id: int, is_head: bool = False):
        self.node_id = node_id
        self.is_head = is_head
        self.hop = 0 if is_head else UNDEFINED_HOP
        self.table: dict[int, NeighborEntry] = {}
        self.active = False
        self.timer_started = False
        self.started_at: int | None = None
        self.finished_at: int | None = None
        self.rounds = 0

    def start(self, now: int, fresh: bool = False) -> None:
        if fresh:
            self.table.clear()
            if not self.is_head:
                self.hop = UNDEFINED_HOP
        self.active = True
        self.timer_started = False
        self.started_at = now
        self.finished_at = None
        self.rounds += 1

    def stop(self, now: int) -> None:
        self.active = False
        self.finished_at = now

    def is_new_adv(self, adv: AdvPayload) -> bool:
        entry = self.table.get(adv.sender)
        if entry is None:
            return True
        return entry.hop != adv.hop or entry.digest != adv.digest

    def on_adv(self, adv: AdvPayload, rssi: float, now: int) -> str | None:
        if not self.active or adv.hop == UNDEFINED_HOP or adv.sender == self.node_id:
            return None
        if not self.is_new_adv(adv):
            entry = self.table[adv.sender]
            entry.rssi = rssi
            return None
        action = "reset" if self.timer_started else "start"
        self.timer_started = True
        if not self.is_head and self.hop > adv.hop + 1:
            self.hop = adv.hop + 1
        self.table[adv.sender] = NeighborEntry(adv.sender, adv.hop, rssi, adv.digest, now)
        return action

    def payload(self, cap: int = DIGEST_CAP) -> AdvPayload:
        return AdvPayload(self.node_id, self.hop, make_digest(self.table.values(), cap))

    def neighbor_hops(self) -> dict[int, int]:
        return {e.id: e.hop for e in self.table.values()}

    def install(self, hop: int, neighbors: Mapping[int, tuple[int, float]], now: int = 0) -> None:
        """Load a converged table directly (pre-installed preliminary phase)."""
        if not self.is_head:
            self.hop = hop
        self.table = {nid: NeighborEntry(nid, h, rssi, (), now) for nid, (h, rssi) in neighbors.items()}


def ideal_discovery(
    adj: Mapping[int, set[int]],
    heads: Iterable[int],
    rssi: Mapping[tuple[int, int], float],
    order: Iterable[int] | None = None,
    max_rounds: int = 1000,
) -> dict[int, Discovery]:
    """Run the discovery rule with perfect reception until nothing changes.

    Each round every node advertises once (in ``order``) and every neighbor
    hears it. Returns the converged per-node state.
    """
    heads = set(heads)
    nodes = {nid: Discovery(nid, nid in heads) for nid in adj}
    for d in nodes.values():
        d.start(0)
    order = list(order) if order is not None else sorted(adj)
    for rnd in range(max_rounds):
        changed = False
        for sender in order:
            adv = nodes[sender].payload()
            for rx in sorted(adj[sender]):
                if nodes[rx].on_adv(adv, rssi[(rx, sender)], rnd) is not None:
                    changed = True
        if not changed:
            break
    for d in nodes.values():
        d.stop(0)
    return nodes
