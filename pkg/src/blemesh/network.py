"""Network of simulated nodes: discovery, path search, data forwarding,
failure recovery and the flooding baseline on top of the MAC."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from .channel import AirLog, ChannelParams, Transmission
from .discovery import AdvPayload, Discovery, ideal_discovery
from .engine import EventKind, RngStreams, SimEvent, Simulator, seconds, to_seconds
from .flooding import ABSORB, HOLD, FloodAgent
from .mac import Mac, MacConfig
from .metrics import EnergyLedger, EnergyModel, PacketRecord, integrate
from .packets import DataPacket, FloodMessage
from .recovery import (
    DOWNLINK,
    UPLINK,
    AdaptiveParams,
    FailureNotice,
    Method,
    RecoveryMode,
    decide,
    failure_coordinates,
    hb_latency,
    hb_select,
    mp_latency,
)
from .routing import (
    GsaAgent,
    GsaMessage,
    LinkResponse,
    RoutingAck,
    RoutingNack,
    RoutingTable,
    Send,
    build_paths_ideal,
    route_origin,
)
from .topology import NodeSpec, connectivity_graph, rssi_table

PROPOSED = "proposed"
FLOODING = "flooding"


@dataclass(frozen=True)
class DiscoveryConfig:
    timer: int = seconds(3.0)
    rediscovery_timer: int = seconds(1.3)
    digest_cap: int = 20
    wake_window: int = seconds(1.0)

    def __post_init__(self):
        if self.timer <= 0 or self.rediscovery_timer <= 0 or self.wake_window < 0:
            raise ValueError("discovery timers must be positive")


@dataclass(frozen=True)
class RoutingConfig:
    k_paths: int = 5
    ttl_slack: int | None = None
    head_one_hop_rule: bool = True
    control_retries: int = 8

    def __post_init__(self):
        if self.k_paths < 1:
            raise ValueError("k_paths must be at least 1")
        if self.control_retries < 0:
            raise ValueError("control_retries must be non-negative")


@dataclass(frozen=True)
class RecoveryConfig:
    mode: RecoveryMode = RecoveryMode.ADAPTIVE
    alpha: float = 0.0
    beta: float = 0.0
    r: float = 2.3
    gamma: float = 0.5
    fresh_discovery: bool = True


@dataclass(frozen=True)
class FloodingConfig:
    ttl: int = 127
    cache_capacity: int = 64
    broadcast_timer: int = seconds(1.5)

    def __post_init__(self):
        if self.ttl < 1 or self.cache_capacity < 1 or self.broadcast_timer < 0:
            raise ValueError("invalid flooding parameters")


@dataclass(frozen=True)
class NetConfig:
    protocol: str = PROPOSED
    channel: ChannelParams = field(default_factory=ChannelParams)
    mac: MacConfig = field(default_factory=MacConfig)
    discovery: DiscoveryConfig = field(default_factory=DiscoveryConfig)
    routing: RoutingConfig = field(default_factory=RoutingConfig)
    recovery: RecoveryConfig = field(default_factory=RecoveryConfig)
    flooding: FloodingConfig = field(default_factory=FloodingConfig)
    energy: EnergyModel = field(default_factory=EnergyModel)
    ideal_reception: bool = False

    def __post_init__(self):
        if self.protocol not in (PROPOSED, FLOODING):
            raise ValueError(f"unknown protocol {self.protocol!r}")


class Node:
    """One device: MAC plus discovery, routing, recovery and flooding state."""

    def __init__(self, spec: NodeSpec, world: "World"):
        self.id = spec.id
        self.spec = spec
        self.world = world
        self.is_head = spec.is_head
        cfg = world.cfg
        self.rng = world.rngs.node(spec.id)
        interval = cfg.mac.head_adv_interval if self.is_head else cfg.mac.adv_interval
        self.mac = Mac(spec.id, self, world, cfg.mac, interval, self.rng)
        self.disc = Discovery(spec.id, self.is_head)
        self._disc_timer: SimEvent | None = None
        self._disc_purpose = ""
        self._disc_len = cfg.discovery.timer
        self.discovery_delay: int | None = None
        self.table = RoutingTable()
        self.gsa = GsaAgent(
            spec.id,
            self.is_head,
            self.neighbor_info,
            self.table,
            k_paths=cfg.routing.k_paths,
            own_hop=lambda: self.disc.hop,
            ttl_slack=cfg.routing.ttl_slack,
            head_one_hop_rule=cfg.routing.head_one_hop_rule,
            clock=world.sim.now,
            on_done=world._gsa_done,
        )
        self.flood = FloodAgent(spec.id, lambda: sorted(self.disc.table), cfg.flooding.cache_capacity)
        self._flood_seq = 0
        self._hb_waiting: list[tuple[DataPacket, int | None]] = []
        self._control_retries: dict[tuple, int] = {}
        self.failed = False
        self.rediscoveries = 0

    # -- neighbor view --------------------------------------------------
    def neighbor_info(self) -> dict[int, tuple[int, float]]:
        return {e.id: (e.hop, e.rssi) for e in self.disc.table.values()}

    # -- MAC upcalls ----------------------------------------------------
    def adv_payload(self) -> AdvPayload:
        return self.disc.payload(self.world.cfg.discovery.digest_cap)

    def discovery_scanning(self) -> bool:
        return self.disc.active

    def on_adv_heard(self, adv: AdvPayload, rssi: float) -> None:
        now = self.world.sim.now()
        if self.disc.on_adv(adv, rssi, now) is not None:
            self._arm_disc_timer(now)

    def on_packet(self, packet: Any, sender: int) -> LinkResponse:
        if isinstance(packet, (GsaMessage, RoutingAck, RoutingNack)):
            response, sends = self.gsa.on_packet(packet, sender)
            self.send(sends)
            return response
        if isinstance(packet, DataPacket):
            self._on_data(packet, sender)
        elif isinstance(packet, FailureNotice):
            self._on_notice(packet, sender)
        elif isinstance(packet, FloodMessage):
            self._on_flood(packet, sender)
        else:
            raise TypeError(f"unexpected packet {packet!r}")
        return LinkResponse.ACK

    def on_link_response(self, packet: Any, dest: int, response: LinkResponse) -> None:
        if isinstance(packet, GsaMessage):
            self.send(self.gsa.on_link_response(packet, dest, response))

    def on_link_failure(self, dest: int, packets: list[Any]) -> None:
        for packet in packets:
            if isinstance(packet, GsaMessage):
                self.send(self.gsa.on_link_failure(packet, dest))
            elif isinstance(packet, DataPacket):
                self._data_failure(packet, dest)
            elif isinstance(packet, FailureNotice):
                self._notice_failure(packet, dest)
            elif isinstance(packet, FloodMessage):
                self.world.flood_skips += 1
            else:
                self._control_failure(packet, dest)

    def _control_failure(self, packet: Any, dest: int) -> None:
        # routing acks/nacks have no recovery of their own; losing one would
        # stall the origin's search, so they are queued again a few times
        key = (type(packet).__name__, packet.route_id, dest)
        tries = self._control_retries.get(key, 0)
        if tries >= self.world.cfg.routing.control_retries:
            self.world.control_lost += 1
            return
        self._control_retries[key] = tries + 1
        self.mac.enqueue(dest, packet)

    def send(self, sends: Iterable[Send]) -> None:
        for s in sends:
            self.mac.enqueue(s.dest, s.packet)

    # -- discovery ------------------------------------------------------
    def begin_discovery(self, purpose: str, fresh: bool = False) -> None:
        now = self.world.sim.now()
        cfg = self.world.cfg.discovery
        self._disc_purpose = purpose
        self._disc_len = cfg.timer if purpose == "initial" else cfg.rediscovery_timer
        self.world.sim.cancel(self._disc_timer)
        self._disc_timer = None
        self.disc.start(now, fresh=fresh)
        if purpose != "initial":
            # bounded even if no neighbor is ever heard
            self.rediscoveries += 1
            self._arm_disc_timer(now)
        self.mac.update_scan()

    def _arm_disc_timer(self, now: int) -> None:
        self.world.sim.cancel(self._disc_timer)
        self._disc_timer = self.world.sim.schedule(
            now + self._disc_len, self._disc_expired, target=self.id, kind=EventKind.TIMER_DISCOVERY
        )

    def _disc_expired(self, ev: SimEvent) -> None:
        now = self.world.sim.now()
        self._disc_timer = None
        self.disc.stop(now)
        self.mac.update_scan()
        if self._disc_purpose == "initial":
            self.discovery_delay = now - self.disc.started_at
            if not self.is_head and self.world.cfg.protocol == PROPOSED and self.world.run_gsa:
                self.send(self.gsa.start())
        else:
            waiting, self._hb_waiting = self._hb_waiting, []
            for packet, prev in waiting:
                self._hb_select_and_send(packet, prev)

    # -- data forwarding ------------------------------------------------
    def originate(self, pid: int, needs_ack: bool) -> None:
        now = self.world.sim.now()
        if self.world.cfg.protocol == FLOODING:
            self._flood_seq += 1
            head = self.world.heads[0]
            msg = FloodMessage(self.id, self._flood_seq, head, self.world.cfg.flooding.ttl, pid, now, None, needs_ack)
            self.send(self.flood.originate(msg))
            return
        routes = [e for e in self.table.for_origin(self.id) if e.active]
        hop = self.disc.hop
        packet = DataPacket(
            pid, self.id, self.world.heads[0], routes[0].route_id if routes else None, now,
            UPLINK, hop, hop, needs_ack,
        )
        if not routes:
            self.world.undeliverable(packet)
            return
        self._forward(packet)

    def _forward(self, packet: DataPacket) -> None:
        entry = self.table.get(packet.route_id) if packet.route_id is not None else None
        nxt = None
        if entry is not None and entry.active:
            nxt = entry.next_hop_upstream if packet.direction == UPLINK else entry.next_hop_downstream
        if nxt is None:
            # no usable entry: handled like a failure of an unknown next hop
            self._data_failure(packet, None)
            return
        self.mac.enqueue(nxt, packet)

    def _arrived(self, packet: DataPacket) -> bool:
        if packet.direction == UPLINK:
            return self.is_head
        return self.id == packet.dest

    def _on_data(self, packet: DataPacket, sender: int) -> None:
        packet = packet.copy(ttl=packet.ttl - 1, hops=packet.hops + 1)
        if self._arrived(packet):
            if packet.hb:
                self.table.write(packet.route_id, None, sender, self.world.sim.now())
            self.table.activate(packet.route_id)
            self.world.delivered(packet, self.id)
            if packet.direction == UPLINK and packet.needs_ack:
                ack = DataPacket(
                    packet.pid, self.id, packet.origin, packet.route_id, self.world.sim.now(),
                    DOWNLINK, packet.hops, packet.hops, False, packet.pid,
                )
                self._forward(ack)
            return
        if packet.hops > self.world.hop_limit:
            self.world.undeliverable(packet)
            return
        if packet.hb:
            self._hb_relay(packet, sender)
            return
        self._forward(packet)

    # -- failure recovery -----------------------------------------------
    def _data_failure(self, packet: DataPacket, failed: int | None) -> None:
        rc = self.world.cfg.recovery
        z, x = failure_coordinates(packet.initial_ttl, packet.ttl)
        params = AdaptiveParams(z, x, rc.alpha, rc.beta, rc.r, rc.gamma)
        method = decide(rc.mode, packet.direction, params)
        self.world.failure_declared(packet, params, method)
        if method is Method.HB and failed is not None:
            self._hb_start(packet, (failed,))
        else:
            self._mp_start(packet, failed)

    def _mp_start(self, packet: DataPacket, failed: int | None) -> None:
        packet = packet.copy(hb=False, failed_ids=())
        if packet.origin == self.id:
            self._mp_resend(packet)
            return
        entry = self.table.get(packet.route_id)
        back = None
        if entry is not None:
            back = entry.next_hop_downstream if packet.direction == UPLINK else entry.next_hop_upstream
        if back is None:
            self.world.undeliverable(packet)
            return
        notice = FailureNotice(packet.route_id, failed if failed is not None else -1, self.id, packet.direction, packet)
        self.mac.enqueue(back, notice)

    def _mp_resend(self, packet: DataPacket) -> None:
        self.table.invalidate(packet.route_id)
        origin = route_origin(packet.route_id)
        nxt = next((e for e in self.table.for_origin(origin) if e.active), None)
        if nxt is None:
            self.world.undeliverable(packet)
            return
        self.world.mp_retries += 1
        self._forward(packet.copy(route_id=nxt.route_id, ttl=packet.initial_ttl, hb=False, failed_ids=()))

    def _on_notice(self, notice: FailureNotice, sender: int) -> None:
        packet = notice.packet
        if packet.origin == self.id:
            self._mp_resend(packet)
            return
        entry = self.table.get(notice.route_id)
        back = None
        if entry is not None:
            back = entry.next_hop_downstream if notice.direction == UPLINK else entry.next_hop_upstream
        if back is None:
            self.world.undeliverable(packet)
            return
        self.mac.enqueue(back, notice)

    def _notice_failure(self, notice: FailureNotice, dest: int) -> None:
        # the way back is broken too: uplink packets can still go around by hop-count
        if notice.direction == UPLINK:
            failed = tuple(f for f in (notice.failed, dest) if f >= 0)
            self._hb_start(notice.packet, failed)
        else:
            self.world.undeliverable(notice.packet)

    def _hb_start(self, packet: DataPacket, failed: Sequence[int]) -> None:
        entry = self.table.get(packet.route_id)
        prev = entry.next_hop_downstream if entry is not None else None
        ids = tuple(sorted(set(packet.failed_ids) | set(failed)))
        packet = packet.copy(hb=True, failed_ids=ids)
        self._hb_queue(packet, prev)

    def _hb_queue(self, packet: DataPacket, prev: int | None) -> None:
        if self.world.cfg.recovery.fresh_discovery:
            self._hb_waiting.append((packet, prev))
            if not (self.disc.active and self._disc_purpose == "rediscovery"):
                self.begin_discovery("rediscovery", fresh=True)
        else:
            self._hb_select_and_send(packet, prev)

    def _hb_select_and_send(self, packet: DataPacket, prev: int | None) -> None:
        exclude = set(packet.failed_ids)
        if prev is not None:
            exclude.add(prev)
        nxt = hb_select(self.neighbor_info(), exclude)
        if nxt is None:
            self.world.hb_fallbacks += 1
            self._mp_start(packet, packet.failed_ids[-1] if packet.failed_ids else None)
            return
        self.table.write(packet.route_id, nxt, prev, self.world.sim.now())
        self.mac.enqueue(nxt, packet)

    def _hb_relay(self, packet: DataPacket, sender: int) -> None:
        def usable(c):
            return c is not None and c != sender and c not in packet.failed_ids

        entry = self.table.get(packet.route_id)
        cand = entry.next_hop_upstream if entry is not None else None
        if not usable(cand):
            own = next((e for e in self.table.for_origin(self.id) if e.active), None)
            cand = own.next_hop_upstream if own is not None else None
        if not usable(cand):
            self._hb_queue(packet, sender)
            return
        self.table.write(packet.route_id, cand, sender, self.world.sim.now())
        self.mac.enqueue(cand, packet)

    # -- flooding -------------------------------------------------------
    def _on_flood(self, msg: FloodMessage, sender: int) -> None:
        outcome = self.flood.on_receive(msg, sender)
        if outcome == ABSORB:
            self.world.flood_absorbed(msg, self.id)
            if msg.needs_ack and msg.ack_for is None:
                self._flood_seq += 1
                ack = FloodMessage(
                    self.id, self._flood_seq, msg.origin, self.world.cfg.flooding.ttl, msg.pid,
                    self.world.sim.now(), msg.pid, False,
                )
                self.send(self.flood.originate(ack))
        elif outcome == HOLD:
            self.world.sim.schedule(
                self.world.sim.now() + self.world.cfg.flooding.broadcast_timer,
                lambda ev: self.send(self.flood.release(ev.payload)),
                target=self.id,
                kind=EventKind.TIMER_BROADCAST,
                payload=msg.key,
            )

    # -- failure injection ----------------------------------------------
    def fail(self) -> None:
        self.failed = True
        self.world.sim.cancel(self._disc_timer)
        self.disc.stop(self.world.sim.now())
        self.mac.power_off()


class World:
    """A simulated network: nodes, shared medium, scheduler and KPI records."""

    def __init__(
        self,
        specs: Sequence[NodeSpec],
        cfg: NetConfig = NetConfig(),
        seed: int = 0,
        trace: bool = False,
        run_gsa: bool = True,
    ):
        self.cfg = cfg
        self.seed = seed
        self.sim = Simulator(trace=trace)
        self.rngs = RngStreams(seed)
        self.specs = {s.id: s for s in specs}
        self.adj = connectivity_graph(specs, cfg.channel)
        self.rssi = rssi_table(specs, self.adj, cfg.channel)
        self.air = AirLog(self.adj, collisions=cfg.channel.collisions)
        self.heads = sorted(s.id for s in specs if s.is_head)
        self.run_gsa = run_gsa
        self.hop_limit = 4 * len(specs)
        self.nodes: dict[int, Node] = {}
        self.macs: dict[int, Mac] = {}
        for s in sorted(specs, key=lambda s: s.id):
            node = Node(s, self)
            self.nodes[s.id] = node
            self.macs[s.id] = node.mac
        self.records: dict[int, PacketRecord] = {}
        self.scenario = "custom"
        self.gsa_done = 0
        self.mp_retries = 0
        self.hb_fallbacks = 0
        self.flood_skips = 0
        self.control_lost = 0
        self.ledger: EnergyLedger | None = None

    # -- medium ---------------------------------------------------------
    def broadcast_adv(self, mac: Mac, pdu: Transmission, payload: AdvPayload, index: int) -> None:
        neighbors = sorted(self.adj[mac.id])
        if self.cfg.ideal_reception:
            if index != 0:
                return
            heard = [n for n in neighbors if self.macs[n].powered and self.macs[n].scanning]
        else:
            cands = [n for n in neighbors if self.macs[n].can_receive(pdu.channel, pdu.start, pdu.end)]
            heard = [n for n, ok in self.air.deliver(pdu, cands).items() if ok]
        for n in heard:
            self.macs[n].on_adv_pdu(mac, pdu, payload, self.rssi[(n, mac.id)])

    # -- setup ----------------------------------------------------------
    def wake_all(self, start_discovery: bool = True) -> None:
        """Nodes wake at random within the wake window; discovery starts when it ends."""
        window = self.cfg.discovery.wake_window
        rng = self.rngs.stream("wake")
        for nid in sorted(self.nodes):
            at = int(rng.integers(0, window)) if window > 0 else 0
            self.macs[nid].power_on(at)
        if start_discovery:
            self.sim.schedule(window, self._start_discovery, kind=EventKind.WAKE)

    def _start_discovery(self, ev: SimEvent) -> None:
        for nid in sorted(self.nodes):
            node = self.nodes[nid]
            if not node.failed:
                node.begin_discovery("initial")

    def preinstall(self) -> None:
        """Load converged neighbor tables (and routes for the proposed protocol)."""
        order = sorted(self.nodes)
        discs = ideal_discovery(self.adj, self.heads, self.rssi, order)
        info = {}
        for nid, d in discs.items():
            self.nodes[nid].disc.install(d.hop, {e.id: (e.hop, e.rssi) for e in d.table.values()})
            self.nodes[nid].discovery_delay = 0
            info[nid] = self.nodes[nid].neighbor_info()
        if self.cfg.protocol != PROPOSED:
            return
        agents, tables = build_paths_ideal(
            self.adj, info, self.heads, self.cfg.routing.k_paths,
            ttl_slack=self.cfg.routing.ttl_slack, head_one_hop_rule=self.cfg.routing.head_one_hop_rule,
        )
        for nid, node in self.nodes.items():
            node.table = tables[nid]
            node.gsa = agents[nid]

    # -- traffic and failures -------------------------------------------
    def schedule_packet(self, pid: int, origin: int, at: int, needs_ack: bool, scenario: str = "") -> None:
        self.records[pid] = PacketRecord(
            scenario or self.scenario, self.seed, self.cfg.protocol, pid, origin, self.heads[0],
            to_seconds(at), ack_required=needs_ack, recovery_mode=self.cfg.recovery.mode.value,
        )
        self.sim.schedule(
            at, lambda ev: self.nodes[origin].originate(pid, needs_ack), target=origin, kind=EventKind.TRAFFIC
        )

    def schedule_failure(self, node_id: int, at: int) -> None:
        self.sim.schedule(at, lambda ev: self.nodes[node_id].fail(), target=node_id, kind=EventKind.FAILURE_INJECT)

    # -- KPI hooks ------------------------------------------------------
    def _gsa_done(self, agent: GsaAgent) -> None:
        self.gsa_done += 1

    def _complete(self, rec: PacketRecord, now_s: float) -> None:
        rec.latency_s = now_s - rec.created_s
        if rec.failure_declared_s is not None:
            rec.recovery_latency_s = (rec.delivered_s or now_s) - rec.failure_declared_s

    def delivered(self, packet: DataPacket, at_node: int) -> None:
        rec = self.records.get(packet.pid)
        if rec is None:
            return
        now_s = to_seconds(self.sim.now())
        if packet.ack_for is None:
            if rec.delivered:
                return
            rec.delivered = True
            rec.delivered_s = now_s
            rec.dest = at_node
            rec.hops = packet.hops
            rec.route_id = packet.route_id
            if rec.failure_declared_s is not None:
                rec.recovery_latency_s = now_s - rec.failure_declared_s
            if not rec.ack_required:
                rec.latency_s = now_s - rec.created_s
        elif rec.acked_s is None:
            rec.acked_s = now_s
            rec.latency_s = now_s - rec.created_s

    def flood_absorbed(self, msg: FloodMessage, at_node: int) -> None:
        rec = self.records.get(msg.pid)
        if rec is None:
            return
        now_s = to_seconds(self.sim.now())
        if msg.ack_for is None:
            if rec.delivered:
                return
            rec.delivered = True
            rec.delivered_s = now_s
            rec.dest = at_node
            if not rec.ack_required:
                rec.latency_s = now_s - rec.created_s
        elif rec.acked_s is None:
            rec.acked_s = now_s
            rec.latency_s = now_s - rec.created_s

    def undeliverable(self, packet: DataPacket) -> None:
        rec = self.records.get(packet.pid)
        if rec is not None and not rec.delivered:
            rec.undeliverable = True

    def failure_declared(self, packet: DataPacket, params: AdaptiveParams, method: Method) -> None:
        rec = self.records.get(packet.pid)
        if rec is None or packet.ack_for is not None or rec.failure_declared_s is not None:
            return
        rec.failure_declared_s = to_seconds(self.sim.now())
        rec.failure_x = params.X
        rec.failure_head_distance = params.Z - params.X
        rec.recovery_choice = method.value
        rec.predicted_hb_s = hb_latency(params)
        rec.predicted_mp_s = mp_latency(params)

    # -- running --------------------------------------------------------
    def run(self, until: int) -> int:
        return self.sim.run_until(until)

    def energy(self, start: int, end: int) -> EnergyLedger:
        for mac in self.macs.values():
            if mac.powered:
                mac.finish(end)
        timelines = {nid: mac.timeline for nid, mac in self.macs.items()}
        self.ledger = integrate(timelines, start, end, self.cfg.energy)
        return self.ledger

    def hop_counts(self) -> dict[int, int]:
        return {nid: n.disc.hop for nid, n in self.nodes.items()}

    def degree(self) -> Mapping[int, int]:
        return {nid: len(a) for nid, a in self.adj.items()}
