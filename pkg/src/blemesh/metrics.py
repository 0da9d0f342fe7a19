"""Radio energy accounting and KPI export."""

from __future__ import annotations

import csv
import io
import math
import os
import statistics
from collections import defaultdict
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Sequence

from .engine import to_seconds

TX, RX, IDLE, SLEEP = "tx", "rx-scan", "idle", "sleep"
STATES = (TX, RX, IDLE, SLEEP)
_PRIORITY = {TX: 3, RX: 2, IDLE: 1}


@dataclass(frozen=True)
class EnergyModel:
    """Per-state radio current draw (mA) at a fixed supply voltage.

    Defaults are datasheet-style figures for a CC2642-class radio; they are
    configuration, not measurements.
    """

    voltage: float = 3.3
    tx_ma: float = 7.3
    rx_ma: float = 6.5
    idle_ma: float = 0.7
    sleep_ma: float = 0.001

    def __post_init__(self):
        if min(self.tx_ma, self.rx_ma, self.idle_ma, self.sleep_ma) < 0:
            raise ValueError("currents must be non-negative")

    def current(self, state: str) -> float:
        return {TX: self.tx_ma, RX: self.rx_ma, IDLE: self.idle_ma, SLEEP: self.sleep_ma}[state]

    def power_mw(self, state: str) -> float:
        return self.current(state) * self.voltage


class EnergyLedger:
    """Accumulates energy per node from non-overlapping state intervals."""

    def __init__(self, model: EnergyModel = EnergyModel()):
        self.model = model
        self.energy_mj: dict[int, float] = defaultdict(float)
        self.durations: dict[int, dict[str, int]] = defaultdict(lambda: dict.fromkeys(STATES, 0))
        self._last_end: dict[int, int] = {}

    def accumulate(self, node: int, state: str, start: int, end: int) -> float:
        assert start <= end, f"negative interval [{start}, {end}]"
        last = self._last_end.get(node)
        assert last is None or start >= last, f"node {node}: overlapping state interval at {start}us"
        self._last_end[node] = end
        e = to_seconds(end - start) * self.model.power_mw(state)
        self.energy_mj[node] += e
        self.durations[node][state] += end - start
        return e

    def average_power(self, node: int, start: int, end: int) -> float:
        if end <= start:
            return 0.0
        return self.energy_mj[node] / to_seconds(end - start)


class RadioTimeline:
    """Raw radio activity intervals of one node.

    Intervals may overlap (e.g. an advertisement sent while scanning); the
    effective state at any instant is the highest of tx > rx-scan > idle,
    and sleep when nothing is recorded.
    """

    def __init__(self):
        self.intervals: list[tuple[str, int, int]] = []
        self._open: dict[str, int] = {}

    def add(self, state: str, start: int, end: int) -> None:
        if end > start:
            self.intervals.append((state, start, end))

    def open(self, state: str, start: int) -> None:
        if state not in self._open:
            self._open[state] = start

    def close(self, state: str, end: int) -> None:
        start = self._open.pop(state, None)
        if start is not None:
            self.add(state, start, end)

    def is_open(self, state: str) -> bool:
        return state in self._open

    def close_all(self, end: int) -> None:
        for state in list(self._open):
            self.close(state, end)

    def segments(self, start: int, end: int) -> list[tuple[str, int, int]]:
        """Disjoint ``(state, from, to)`` segments covering ``[start, end]``."""
        items = list(self.intervals) + [(s, t0, end) for s, t0 in self._open.items()]
        bounds = []
        for state, s, e in items:
            s, e = max(s, start), min(e, end)
            if e > s:
                bounds.append((s, 1, state))
                bounds.append((e, -1, state))
        bounds.sort(key=lambda b: b[0])
        counts = dict.fromkeys(_PRIORITY, 0)
        out: list[tuple[str, int, int]] = []
        t = start
        i = 0
        while i <= len(bounds):
            nxt = bounds[i][0] if i < len(bounds) else end
            if nxt > t:
                active = [s for s, c in counts.items() if c > 0]
                state = max(active, key=_PRIORITY.__getitem__) if active else SLEEP
                if out and out[-1][0] == state and out[-1][2] == t:
                    out[-1] = (state, out[-1][1], nxt)
                else:
                    out.append((state, t, nxt))
                t = nxt
            if i == len(bounds):
                break
            while i < len(bounds) and bounds[i][0] == nxt:
                counts[bounds[i][2]] += bounds[i][1]
                i += 1
        return out


def integrate(timelines: dict[int, RadioTimeline], start: int, end: int, model: EnergyModel = EnergyModel()) -> EnergyLedger:
    ledger = EnergyLedger(model)
    for nid in sorted(timelines):
        for state, s, e in timelines[nid].segments(start, end):
            ledger.accumulate(nid, state, s, e)
    return ledger


@dataclass
class PacketRecord:
    scenario: str
    seed: int
    protocol: str
    packet_id: int
    origin: int
    dest: int
    created_s: float
    ack_required: bool = False
    delivered: bool = False
    delivered_s: float | None = None
    acked_s: float | None = None
    latency_s: float | None = None
    undeliverable: bool = False
    hops: int | None = None
    route_id: int | None = None
    recovery_mode: str = ""
    failure_x: int | None = None
    failure_head_distance: int | None = None
    recovery_choice: str = ""
    failure_declared_s: float | None = None
    recovery_latency_s: float | None = None
    predicted_hb_s: float | None = None
    predicted_mp_s: float | None = None


@dataclass
class NodeRecord:
    scenario: str
    seed: int
    protocol: str
    node_id: int
    role: str
    hop_count: int | None = None
    degree: int = 0
    discovery_delay_s: float | None = None
    all_phase_delay_s: float | None = None
    paths: int = 0
    window_s: float = 0.0
    energy_mj: float = 0.0
    avg_power_mw: float = 0.0
    tx_sessions: int = 0
    tx_packets: int = 0
    adv_events: int = 0
    failed: bool = False


COLUMNS: tuple[str, ...] = ("row_type",) + tuple(
    dict.fromkeys([f.name for f in fields(PacketRecord)] + [f.name for f in fields(NodeRecord)])
)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return f"{value:.6f}"
    return str(value)


def to_rows(records: Iterable[PacketRecord | NodeRecord]) -> list[dict[str, str]]:
    rows = []
    for rec in records:
        kind = "packet" if isinstance(rec, PacketRecord) else "node"
        row = dict.fromkeys(COLUMNS, "")
        row["row_type"] = kind
        for k, v in asdict(rec).items():
            row[k] = _fmt(v)
        rows.append(row)
    return rows


def export(records: Sequence[PacketRecord | NodeRecord], path: str | os.PathLike) -> None:
    """Write records as CSV: packet rows first, then node rows, fixed column order."""
    ordered = [r for r in records if isinstance(r, PacketRecord)] + [r for r in records if isinstance(r, NodeRecord)]
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=COLUMNS, lineterminator="\n")
            writer.writeheader()
            writer.writerows(to_rows(ordered))
    except OSError as exc:
        raise OSError(f"cannot write KPI file {os.fspath(path)!r}: {exc.strerror or exc}") from exc


def export_string(records: Sequence[PacketRecord | NodeRecord]) -> str:
    buf = io.StringIO()
    ordered = [r for r in records if isinstance(r, PacketRecord)] + [r for r in records if isinstance(r, NodeRecord)]
    writer = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(to_rows(ordered))
    return buf.getvalue()


@dataclass
class Summary:
    metric: str
    n: int
    mean: float
    min: float
    max: float
    std: float


def summarize(name: str, values: Iterable[float]) -> Summary:
    vals = [v for v in values if v is not None and not math.isnan(v)]
    if not vals:
        return Summary(name, 0, math.nan, math.nan, math.nan, math.nan)
    std = statistics.stdev(vals) if len(vals) > 1 else 0.0
    return Summary(name, len(vals), statistics.fmean(vals), min(vals), max(vals), std)


def export_summary(summaries: Sequence[Summary], path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["metric", "n", "mean", "min", "max", "std"])
        for s in summaries:
            writer.writerow([s.metric, s.n, _fmt(s.mean), _fmt(s.min), _fmt(s.max), _fmt(s.std)])
