"""ITU indoor path loss, neighbor reachability and advertising-channel contention."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping

FLOOR_HEIGHT_M = 4.0
ADV_CHANNELS = (37, 38, 39)


def floor_of(z: float) -> int:
    """Floor index for height ``z``; a ceiling-mounted point belongs to the floor below."""
    if z <= 0:
        return 0
    return max(0, math.ceil(z / FLOOR_HEIGHT_M - 1e-9) - 1)


@dataclass(frozen=True)
class Position:
    x: float
    y: float
    z: float
    floor: int | None = None

    def __post_init__(self):
        for v in (self.x, self.y, self.z):
            if not math.isfinite(v):
                raise ValueError(f"non-finite coordinate in {self!r}")
        if self.floor is None:
            object.__setattr__(self, "floor", floor_of(self.z))

    def distance(self, other: "Position") -> float:
        return math.dist((self.x, self.y, self.z), (other.x, other.y, other.z))


@dataclass(frozen=True)
class ChannelParams:
    f: float = 2400.0  # MHz
    N: float = 22.0
    Pf: float = 6.0  # dB per floor
    pl_threshold: float = 70.0
    min_distance: float = 1.0
    collisions: bool = True

    def __post_init__(self):
        if self.f <= 0 or self.N <= 0 or self.Pf < 0 or self.pl_threshold <= 0:
            raise ValueError(f"invalid channel parameters {self!r}")


def path_loss(a: Position, b: Position, p: ChannelParams = ChannelParams()) -> float:
    """Path loss in dB between two positions.

    ``20 log10(f) + N log10(d) + Pf * n - 28`` with ``d`` clamped to
    ``p.min_distance`` and ``n`` the number of floors crossed.
    """
    d = max(a.distance(b), p.min_distance)
    n = abs(a.floor - b.floor)
    return 20.0 * math.log10(p.f) + p.N * math.log10(d) + p.Pf * n - 28.0


def is_neighbor(a: Position, b: Position, p: ChannelParams = ChannelParams()) -> bool:
    return path_loss(a, b, p) <= p.pl_threshold


@dataclass(frozen=True)
class Transmission:
    sender: int
    channel: int
    start: int
    end: int

    def overlaps(self, start: int, end: int) -> bool:
        return self.start < end and start < self.end


class AirLog:
    """Record of recent transmissions per advertising channel.

    Collision rule: a reception at ``rx`` of transmission ``tx`` is lost when
    any other sender within range of ``rx`` transmits on the same channel
    during an overlapping interval. There is no capture effect.
    """

    def __init__(self, in_range: Mapping[int, Iterable[int]], collisions: bool = True, horizon: int = 50_000):
        self.in_range = {k: frozenset(v) for k, v in in_range.items()}
        self.collisions = collisions
        self.horizon = horizon
        self._log: dict[int, list[Transmission]] = defaultdict(list)

    def add(self, tx: Transmission) -> None:
        entries = self._log[tx.channel]
        entries.append(tx)
        if len(entries) > 256:
            cutoff = tx.start - self.horizon
            self._log[tx.channel] = [t for t in entries if t.end >= cutoff]

    def remove(self, tx: Transmission) -> None:
        entries = self._log.get(tx.channel)
        if entries and tx in entries:
            entries.remove(tx)

    def collided(self, tx: Transmission, rx: int) -> bool:
        if not self.collisions:
            return False
        reach = self.in_range.get(rx, frozenset())
        for other in self._log.get(tx.channel, ()):
            if other is tx or other == tx:
                continue
            if other.sender == rx:
                continue
            if other.sender in reach and other.overlaps(tx.start, tx.end):
                return True
        return False

    def deliver(self, tx: Transmission, listeners: Iterable[int]) -> dict[int, bool]:
        """Outcome per listener of ``tx``.

        ``listeners`` are the nodes that were listening on ``tx.channel`` for
        the whole airtime; nodes out of range of the sender are skipped.
        """
        reach = self.in_range.get(tx.sender, frozenset())
        out: dict[int, bool] = {}
        for rx in listeners:
            if rx == tx.sender or rx not in reach:
                continue
            out[rx] = not self.collided(tx, rx)
        return out
