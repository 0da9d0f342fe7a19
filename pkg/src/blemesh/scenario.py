"""Experiment runners: preliminary phase, background traffic, failure injection."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

from .config import ConfigError, ScenarioConfig
from .engine import seconds, to_seconds
from .metrics import NodeRecord, PacketRecord, Summary, export, export_summary, summarize
from .network import PROPOSED, World
from .routing import build_paths_ideal
from .topology import BLE_NODE, HEAD, hop_distances, load_topology

# progress checks while waiting for the preliminary phase to finish
_STEP = seconds(1.0)


@dataclass
class RunResult:
    config: ScenarioConfig
    seed: int
    packets: list[PacketRecord]
    nodes: list[NodeRecord]
    world: World = field(repr=False)
    end: int = 0
    failed_node: int | None = None
    source: int | None = None

    @property
    def records(self) -> list[PacketRecord | NodeRecord]:
        return [*self.packets, *self.nodes]

    def ble_nodes(self, include_failed: bool = False) -> list[NodeRecord]:
        return [r for r in self.nodes if r.role == BLE_NODE and (include_failed or not r.failed)]

    def mean_power(self) -> float:
        vals = [r.avg_power_mw for r in self.ble_nodes()]
        return sum(vals) / len(vals) if vals else math.nan

    def mean_discovery_delay(self) -> float:
        vals = [r.discovery_delay_s for r in self.ble_nodes() if r.discovery_delay_s is not None]
        return sum(vals) / len(vals) if vals else math.nan

    def mean_all_phase(self) -> float:
        vals = [r.all_phase_delay_s for r in self.ble_nodes() if r.all_phase_delay_s is not None]
        return sum(vals) / len(vals) if vals else math.nan


def _pick_sources(cfg: ScenarioConfig, world: World, hops: dict[int, int]) -> list[int]:
    tc = cfg.traffic
    explicit = tc.source_ids()
    if explicit is not None:
        if len(explicit) < tc.packets:
            raise ConfigError(f"[traffic] {tc.packets} packets need as many sources, got {len(explicit)}")
        return explicit[: tc.packets]
    pool = sorted(n for n in world.nodes if n not in world.heads and n in hops)
    if tc.source_hop is not None:
        pool = [n for n in pool if hops[n] == tc.source_hop]
        if not pool:
            raise ConfigError(f"[traffic] no node at hop-count {tc.source_hop}")
    if tc.packets > len(pool):
        raise ConfigError(f"[traffic] {tc.packets} packets but only {len(pool)} candidate sources")
    rng = world.rngs.stream("traffic")
    idx = rng.choice(len(pool), size=tc.packets, replace=False)
    return [pool[int(i)] for i in idx]


def _failed_on_path(cfg: ScenarioConfig, world: World, source: int, hops: dict[int, int]) -> int:
    """Node ``x`` hops along the source's first path (as built with ideal delivery)."""
    x = cfg.failure.x
    info = {n: {m: (hops[m], world.rssi[(n, m)]) for m in world.adj[n] if m in hops} for n in world.nodes}
    agents, _ = build_paths_ideal(
        world.adj, info, world.heads, cfg.routing.k_paths, origins=[source],
        ttl_slack=cfg.routing.ttl_slack, head_one_hop_rule=cfg.routing.head_one_hop_rule,
    )
    if not agents[source].paths:
        raise ConfigError(f"[failure] source {source} has no path to a head")
    path = agents[source].paths[0]
    if x >= len(path) - 1:
        raise ConfigError(f"[failure] no node {x} hops from source {source} on its path {path}")
    return path[x]


def run(cfg: ScenarioConfig, seed: int | None = None) -> RunResult:
    """Run one seeded simulation of ``cfg`` and collect its KPI records."""
    seed = cfg.scenario.seed if seed is None else seed
    rc = cfg.scenario
    try:
        specs = load_topology(cfg.topology)
    except ValueError as exc:
        raise ConfigError(f"[topology] {exc}") from None
    simulate = rc.preliminary == "simulate"
    world = World(specs, cfg.net_config(), seed=seed, run_gsa=rc.protocol == PROPOSED)
    world.scenario = rc.name
    if simulate:
        world.wake_all(start_discovery=True)
    else:
        world.preinstall()
        world.wake_all(start_discovery=False)

    hops = hop_distances(world.adj, world.heads)
    sources = _pick_sources(cfg, world, hops) if cfg.traffic.packets else []
    rng = world.rngs.stream("traffic-times")
    p_ack = cfg.traffic.ack_probability()
    for i, src in enumerate(sources):
        at = cfg.traffic.start + int(rng.integers(0, cfg.traffic.window))
        needs_ack = bool(rng.random() < p_ack) if 0.0 < p_ack < 1.0 else p_ack == 1.0
        world.schedule_packet(i + 1, src, at, needs_ack)

    failed = cfg.failure.node
    if failed is None and cfg.failure.x is not None:
        failed = _failed_on_path(cfg, world, sources[0], hops)
    if failed is not None:
        world.schedule_failure(failed, cfg.failure.at)

    if simulate and rc.protocol == PROPOSED:
        # the preliminary phase ends once every node has finished its path search
        target = sum(1 for n in world.nodes.values() if not n.is_head)
        t = 0
        while t < rc.duration and world.gsa_done < target:
            t = min(t + _STEP, rc.duration)
            world.run(t)
        end = t
        if cfg.traffic.packets:
            end = rc.duration
            world.run(end)
    else:
        end = rc.duration
        world.run(end)

    window = rc.power_window if rc.power_window is not None else end
    ledger = world.energy(0, window)
    packets = sorted(world.records.values(), key=lambda r: r.packet_id)
    nodes = []
    wake = cfg.discovery.wake_window
    for nid in sorted(world.nodes):
        node = world.nodes[nid]
        done_at = node.gsa.done_at if simulate and not node.is_head else None
        nodes.append(
            NodeRecord(
                rc.name, seed, rc.protocol, nid,
                HEAD if node.is_head else BLE_NODE,
                hop_count=node.disc.hop if node.disc.hop != 0xFF else None,
                degree=len(world.adj[nid]),
                discovery_delay_s=to_seconds(node.discovery_delay) if simulate and node.discovery_delay is not None else None,
                all_phase_delay_s=to_seconds(done_at - wake) if done_at is not None else None,
                paths=node.gsa.n_paths,
                window_s=to_seconds(window),
                energy_mj=ledger.energy_mj[nid],
                avg_power_mw=ledger.average_power(nid, 0, window),
                tx_sessions=node.mac.sessions,
                tx_packets=node.mac.tx_packets,
                adv_events=node.mac.adv_events,
                failed=node.failed,
            )
        )
    return RunResult(cfg, seed, packets, nodes, world, end, failed, sources[0] if sources else None)


def run_case1(cfg: ScenarioConfig, seed: int | None = None) -> RunResult:
    if cfg.scenario.protocol != PROPOSED:
        raise ConfigError("case1 evaluates the proposed protocol's preliminary phase")
    return run(cfg, seed)


def run_case2(cfg: ScenarioConfig, seed: int | None = None) -> RunResult:
    return run(cfg, seed)


def run_case3(cfg: ScenarioConfig, seed: int | None = None) -> RunResult:
    if cfg.failure.node is None and cfg.failure.x is None:
        raise ConfigError("case3 needs a failed node or a hop placement")
    return run(cfg, seed)


RUNNERS = {"case1": run_case1, "case2": run_case2, "case3": run_case3, "custom": run}


def run_many(cfg: ScenarioConfig) -> list[RunResult]:
    """``runs`` simulations with seeds ``seed, seed + 1, ...``."""
    runner = RUNNERS[cfg.scenario.name]
    return [runner(cfg, cfg.scenario.seed + i) for i in range(cfg.scenario.runs)]


def summaries(results: list[RunResult]) -> list[Summary]:
    """Per-run KPIs aggregated over runs."""

    def per_run(fn):
        return [fn(r) for r in results]

    def mean_or_nan(vals):
        vals = [v for v in vals if v is not None]
        return sum(vals) / len(vals) if vals else math.nan

    out = [
        summarize("avg_power_mw", per_run(RunResult.mean_power)),
        summarize("discovery_delay_s", per_run(RunResult.mean_discovery_delay)),
        summarize("all_phase_delay_s", per_run(RunResult.mean_all_phase)),
        summarize("latency_s", per_run(lambda r: mean_or_nan([p.latency_s for p in r.packets]))),
        summarize("recovery_latency_s", per_run(lambda r: mean_or_nan([p.recovery_latency_s for p in r.packets]))),
        summarize(
            "delivered_ratio",
            per_run(lambda r: sum(p.delivered for p in r.packets) / len(r.packets) if r.packets else math.nan),
        ),
        summarize("undeliverable", per_run(lambda r: float(sum(p.undeliverable for p in r.packets)))),
    ]
    return out


def write_outputs(results: list[RunResult], out_dir: str) -> list[str]:
    """One KPI CSV per run plus ``summary.csv``; returns the written paths."""
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir!r}: {exc.strerror or exc}") from exc
    paths = []
    for r in results:
        path = os.path.join(out_dir, f"{r.config.scenario.name}_{r.config.scenario.protocol}_seed{r.seed}.csv")
        export(r.records, path)
        paths.append(path)
    path = os.path.join(out_dir, "summary.csv")
    export_summary(summaries(results), path)
    paths.append(path)
    return paths
