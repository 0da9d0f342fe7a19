"""Failure recovery: multi-path (MP), hop-distance based (HB), and adaptive choice.

Latency estimates, all in seconds (hop terms are scaled by ``gamma``, the
single-hop delivery time):

    HB = r + gamma * (Z - X + 1 + alpha)
    MP = gamma * (Z + X - 1 + beta)

``Z`` is the origin's hop distance to the head and ``X`` the hop distance
from the origin to the failed node. HB wins when
``X > (r / gamma + alpha + 2 - beta) / 2``; ties go to MP, which needs no
rediscovery.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .discovery import UNDEFINED_HOP


class RecoveryMode(enum.Enum):
    MP_ONLY = "mp"
    HB_ONLY = "hb"
    ADAPTIVE = "adaptive"


class Method(enum.Enum):
    HB = "HB"
    MP = "MP"


UPLINK = "uplink"
DOWNLINK = "downlink"


@dataclass(frozen=True)
class AdaptiveParams:
    Z: int
    X: int
    alpha: float = 0.0
    beta: float = 0.0
    r: float = 2.3
    gamma: float = 0.5

    def __post_init__(self):
        if self.Z < 1 or not 1 <= self.X <= self.Z:
            raise ValueError(f"need Z >= 1 and 1 <= X <= Z, got Z={self.Z}, X={self.X}")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if self.r <= 0 or self.gamma <= 0:
            raise ValueError("r and gamma must be positive")


def hb_latency(p: AdaptiveParams) -> float:
    return p.r + p.gamma * (p.Z - p.X + 1 + p.alpha)


def mp_latency(p: AdaptiveParams) -> float:
    return p.gamma * (p.Z + p.X - 1 + p.beta)


def hb_threshold(p: AdaptiveParams) -> float:
    """Lower bound on X above which HB is faster."""
    return (p.r / p.gamma + p.alpha + 2 - p.beta) / 2


def choose_recovery(p: AdaptiveParams) -> Method:
    return Method.HB if hb_latency(p) < mp_latency(p) else Method.MP


def decide(mode: RecoveryMode, direction: str, params: AdaptiveParams | None) -> Method:
    """Recovery method for a failure; HB is only defined for uplink traffic."""
    if direction != UPLINK or mode is RecoveryMode.MP_ONLY:
        return Method.MP
    if mode is RecoveryMode.HB_ONLY:
        return Method.HB
    return choose_recovery(params)


def failure_coordinates(initial_ttl: int, ttl: int) -> tuple[int, int]:
    """``(Z, X)`` read from a data packet's TTL at the node that detected the failure.

    The detector sits ``initial_ttl - ttl`` hops from the origin, so the
    failed node is one hop further. Both values are clamped into the valid
    range because repaired routes can be longer than the origin's hop-count.
    """
    z = max(1, initial_ttl)
    x = (initial_ttl - ttl) + 1
    return z, min(max(1, x), z)


def hb_select(
    neighbors: Mapping[int, tuple[int, float]],
    exclude: Iterable[int] = (),
) -> int | None:
    """Minimum hop-count neighbor not in ``exclude``; best RSSI, then lowest id, on ties."""
    exclude = set(exclude)
    best = None
    best_key = None
    for nid, (hop, rssi) in neighbors.items():
        if nid in exclude or hop == UNDEFINED_HOP:
            continue
        key = (hop, -rssi, nid)
        if best_key is None or key < best_key:
            best, best_key = nid, key
    return best


@dataclass
class FailureNotice:
    route_id: int
    failed: int
    detector: int
    direction: str
    packet: object = field(repr=False, default=None)
