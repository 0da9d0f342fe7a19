"""Network-layer packets carried over MAC data sessions."""

from __future__ import annotations

from dataclasses import dataclass, replace

from .recovery import UPLINK


@dataclass
class DataPacket:
    pid: int
    origin: int
    dest: int
    route_id: int | None
    created_at: int
    direction: str = UPLINK
    ttl: int = 0
    initial_ttl: int = 0
    needs_ack: bool = False
    ack_for: int | None = None
    hb: bool = False
    failed_ids: tuple[int, ...] = ()
    hops: int = 0

    def copy(self, **changes) -> "DataPacket":
        return replace(self, **changes)


@dataclass(frozen=True)
class FloodMessage:
    origin: int
    seq: int
    dest: int
    ttl: int
    pid: int
    created_at: int
    ack_for: int | None = None
    needs_ack: bool = False

    @property
    def key(self) -> tuple[int, int]:
        return (self.origin, self.seq)
