"""Greedy search for node-disjoint minimum-hop paths, and the routing table.

Each origin builds up to ``K`` paths to a head one after the other. A search
message carries a TTL; every relay picks the neighbor with the smallest
hop-count strictly below its remaining TTL (best RSSI on ties), skipping
neighbors it has excluded. Relays already on a previous path of the same
origin refuse the message, which keeps the intermediate node sets disjoint.

The protocol logic is transport-agnostic: handlers return ``Send`` actions
and link-level responses, and a transport (the MAC simulation, or
:class:`IdealTransport` for tests and pre-installed routes) carries them.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

from .discovery import UNDEFINED_HOP

ROUTE_ID_STRIDE = 1000


class LinkResponse(enum.Enum):
    ACK = "ack"
    NACK_PERM = "nack-perm"
    NACK_TEMP = "nack-temp"


def make_route_id(origin: int, index: int) -> int:
    return origin * ROUTE_ID_STRIDE + index


def route_origin(route_id: int) -> int:
    return route_id // ROUTE_ID_STRIDE


@dataclass(frozen=True)
class GsaMessage:
    route_id: int
    origin: int
    ttl: int
    max_ttl: int
    visited: tuple[int, ...]

    def __post_init__(self):
        assert self.ttl <= self.max_ttl
        assert len(set(self.visited)) == len(self.visited)


@dataclass(frozen=True)
class RoutingAck:
    route_id: int
    origin: int
    path: tuple[int, ...]


@dataclass(frozen=True)
class RoutingNack:
    route_id: int
    origin: int


@dataclass
class RoutingEntry:
    route_id: int
    next_hop_upstream: int | None
    next_hop_downstream: int | None
    created_at: int
    state: str = "active"

    @property
    def origin(self) -> int:
        return route_origin(self.route_id)

    @property
    def active(self) -> bool:
        return self.state == "active"


class RoutingTable:
    """Route id -> entry, kept in chronological (creation) order."""

    def __init__(self):
        self._entries: dict[int, RoutingEntry] = {}

    def __contains__(self, route_id: int) -> bool:
        return route_id in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, route_id: int) -> RoutingEntry | None:
        return self._entries.get(route_id)

    def write(self, route_id: int, up: int | None, down: int | None, now: int) -> RoutingEntry:
        entry = self._entries.get(route_id)
        if entry is None:
            entry = RoutingEntry(route_id, up, down, now)
            self._entries[route_id] = entry
        else:
            entry.next_hop_upstream = up
            entry.next_hop_downstream = down
            entry.state = "active"
        return entry

    def entries(self) -> list[RoutingEntry]:
        return sorted(self._entries.values(), key=lambda e: (e.created_at, e.route_id))

    def for_origin(self, origin: int) -> list[RoutingEntry]:
        return [e for e in self.entries() if e.origin == origin]

    def has_origin(self, origin: int) -> bool:
        return any(route_origin(r) == origin for r in self._entries)

    def invalidate(self, route_id: int) -> None:
        entry = self._entries.get(route_id)
        if entry is not None:
            entry.state = "invalidated"

    def activate(self, route_id: int) -> None:
        """Mark ``route_id`` active and invalidate every older route of the same origin."""
        entry = self._entries.get(route_id)
        if entry is None:
            return
        entry.state = "active"
        for other in self.for_origin(entry.origin):
            if other is entry:
                break
            other.state = "invalidated"

    def dump(self) -> str:
        lines = ["route_id\tupstream\tdownstream\tstate\tcreated_us"]
        for e in self.entries():
            lines.append(f"{e.route_id}\t{e.next_hop_upstream}\t{e.next_hop_downstream}\t{e.state}\t{e.created_at}")
        return "\n".join(lines) + "\n"


@dataclass
class ExclusionLists:
    perm_excluded: set[int] = field(default_factory=set)
    temp_excluded: dict[int, int] = field(default_factory=dict)

    def exclude_perm(self, nid: int) -> None:
        self.perm_excluded.add(nid)
        self.temp_excluded.pop(nid, None)

    def exclude_temp(self, nid: int, max_ttl: int) -> None:
        if nid not in self.perm_excluded:
            self.temp_excluded[nid] = max_ttl

    def is_temp(self, nid: int, max_ttl: int) -> bool:
        return self.temp_excluded.get(nid) == max_ttl

    def blocked(self, nid: int, max_ttl: int) -> bool:
        return nid in self.perm_excluded or self.is_temp(nid, max_ttl)


def select_next_hop(
    ttl: int,
    neighbors: Mapping[int, tuple[int, float]],
    exclusions: ExclusionLists,
    max_ttl: int,
    skip: Iterable[int] = (),
) -> int | None:
    """Neighbor with minimum hop-count below ``ttl``; best RSSI, then lowest id, on ties.

    ``neighbors`` maps id -> (hop-count, rssi).
    """
    skip = set(skip)
    best = None
    best_key = None
    for nid, (hop, rssi) in neighbors.items():
        if nid in skip or hop == UNDEFINED_HOP or hop >= ttl or exclusions.blocked(nid, max_ttl):
            continue
        key = (hop, -rssi, nid)
        if best_key is None or key < best_key:
            best, best_key = nid, key
    return best


@dataclass(frozen=True)
class Send:
    dest: int
    packet: object


@dataclass
class _Relay:
    prev: int
    ttl: int
    msg: GsaMessage
    next_hop: int | None = None


class GsaAgent:
    """Search state of one node, both as origin and as relay."""

    def __init__(
        self,
        node_id: int,
        is_head: bool,
        neighbors: Callable[[], Mapping[int, tuple[int, float]]],
        table: RoutingTable,
        k_paths: int = 5,
        own_hop: Callable[[], int] = lambda: 0,
        ttl_slack: int | None = None,
        head_one_hop_rule: bool = True,
        clock: Callable[[], int] = lambda: 0,
        on_done: Callable[["GsaAgent"], None] | None = None,
    ):
        self.node_id = node_id
        self.is_head = is_head
        self._neighbors = neighbors
        self.table = table
        self.k_paths = k_paths
        self.own_hop = own_hop
        self.ttl_slack = k_paths if ttl_slack is None else ttl_slack
        self.head_one_hop_rule = head_one_hop_rule
        self.clock = clock
        self.on_done = on_done
        self.exclusions: dict[int, ExclusionLists] = {}
        self.relays: dict[int, _Relay] = {}
        # origin state
        self.max_ttl = 1
        self.n_paths = 0
        self.paths: list[tuple[int, ...]] = []
        self.route_ids: list[int] = []
        self.current: GsaMessage | None = None
        self.current_next: int | None = None
        self.started = False
        self.done = False
        self.done_at: int | None = None
        self.searches = 0
        self.escalations = 0

    # -- helpers --------------------------------------------------------
    def neighbors(self) -> Mapping[int, tuple[int, float]]:
        return self._neighbors()

    @property
    def max_ttl_cap(self) -> int:
        # search bound never exceeds own hop-count + slack (diameter + K at most)
        return self.own_hop() + self.ttl_slack

    def excl(self, origin: int) -> ExclusionLists:
        lists = self.exclusions.get(origin)
        if lists is None:
            lists = self.exclusions[origin] = ExclusionLists()
        return lists

    def _finish(self) -> list[Send]:
        self.current = None
        self.current_next = None
        self.done = True
        self.done_at = self.clock()
        if self.on_done is not None:
            self.on_done(self)
        return []

    # -- origin operations ----------------------------------------------
    def start(self) -> list[Send]:
        if self.is_head or self.started:
            return []
        self.started = True
        return self._new_path()

    def _new_path(self) -> list[Send]:
        if self.n_paths >= self.k_paths:
            return self._finish()
        self.searches += 1
        route_id = make_route_id(self.node_id, self.n_paths + 1)
        self.current = GsaMessage(route_id, self.node_id, self.max_ttl, self.max_ttl, (self.node_id,))
        return self._origin_send()

    def _origin_send(self) -> list[Send]:
        while True:
            msg = self.current
            lists = self.excl(self.node_id)
            nxt = select_next_hop(self.max_ttl, self.neighbors(), lists, self.max_ttl, skip=(self.node_id,))
            if nxt is not None:
                self.current_next = nxt
                return [Send(nxt, msg)]
            # no selectable neighbor: escalate the search bound if it can help
            can_escalate = any(
                nid != self.node_id
                and hop != UNDEFINED_HOP
                and nid not in lists.perm_excluded
                and (hop >= self.max_ttl or lists.is_temp(nid, self.max_ttl))
                for nid, (hop, _) in self.neighbors().items()
            )
            if not can_escalate or self.max_ttl >= self.max_ttl_cap:
                return self._finish()
            self.max_ttl += 1
            self.escalations += 1
            self.current = GsaMessage(msg.route_id, self.node_id, self.max_ttl, self.max_ttl, (self.node_id,))

    # -- receiving operations -------------------------------------------
    def on_gsa(self, msg: GsaMessage, sender: int) -> tuple[LinkResponse, list[Send]]:
        origin = msg.origin
        if self.is_head:
            if self.head_one_hop_rule and msg.visited == (origin,) and self.table.has_origin(origin):
                return LinkResponse.NACK_PERM, []
            path = msg.visited + (self.node_id,)
            self.table.write(msg.route_id, None, sender, self.clock())
            return LinkResponse.ACK, [Send(sender, RoutingAck(msg.route_id, origin, path))]
        if origin == self.node_id or self.node_id in msg.visited:
            return LinkResponse.NACK_PERM, []
        if self.table.has_origin(origin):
            return LinkResponse.NACK_PERM, []
        ttl = msg.ttl - 1
        lists = self.excl(origin)
        skip = set(msg.visited)
        nxt = select_next_hop(ttl, self.neighbors(), lists, msg.max_ttl, skip=skip)
        if nxt is None:
            any_left = any(
                nid not in skip and hop != UNDEFINED_HOP and nid not in lists.perm_excluded
                for nid, (hop, _) in self.neighbors().items()
            )
            return (LinkResponse.NACK_TEMP if any_left else LinkResponse.NACK_PERM), []
        fwd = GsaMessage(msg.route_id, origin, ttl, msg.max_ttl, msg.visited + (self.node_id,))
        self.relays[msg.route_id] = _Relay(sender, ttl, fwd, nxt)
        return LinkResponse.ACK, [Send(nxt, fwd)]

    def on_link_response(self, msg: GsaMessage, dest: int, response: LinkResponse) -> list[Send]:
        if response is LinkResponse.ACK:
            return []
        lists = self.excl(msg.origin)
        if response is LinkResponse.NACK_PERM:
            lists.exclude_perm(dest)
        else:
            lists.exclude_temp(dest, msg.max_ttl)
        return self._reselect(msg, dest)

    def on_link_failure(self, msg: GsaMessage, dest: int) -> list[Send]:
        """Next hop unreachable at the MAC level: treated as a temporary nack."""
        return self.on_link_response(msg, dest, LinkResponse.NACK_TEMP)

    def _reselect(self, msg: GsaMessage, failed: int) -> list[Send]:
        if msg.origin == self.node_id:
            if self.current is None or self.current.route_id != msg.route_id or self.current_next != failed:
                return []
            return self._origin_send()
        relay = self.relays.get(msg.route_id)
        if relay is None or relay.next_hop != failed:
            return []
        lists = self.excl(msg.origin)
        nxt = select_next_hop(relay.ttl, self.neighbors(), lists, msg.max_ttl, skip=relay.msg.visited)
        if nxt is None:
            del self.relays[msg.route_id]
            return [Send(relay.prev, RoutingNack(msg.route_id, msg.origin))]
        relay.next_hop = nxt
        return [Send(nxt, relay.msg)]

    def on_routing_nack(self, nack: RoutingNack, sender: int) -> list[Send]:
        if nack.origin == self.node_id:
            if self.current is None or self.current.route_id != nack.route_id or self.current_next != sender:
                return []
            self.excl(self.node_id).exclude_temp(sender, self.current.max_ttl)
            return self._origin_send()
        relay = self.relays.get(nack.route_id)
        if relay is None or relay.next_hop != sender:
            return []
        self.excl(nack.origin).exclude_temp(sender, relay.msg.max_ttl)
        return self._reselect(relay.msg, sender)

    def on_routing_ack(self, ack: RoutingAck, sender: int) -> list[Send]:
        path = ack.path
        if self.node_id not in path:
            return []
        i = path.index(self.node_id)
        down = path[i - 1] if i > 0 else None
        self.table.write(ack.route_id, sender, down, self.clock())
        if ack.origin == self.node_id:
            if self.current is None or self.current.route_id != ack.route_id:
                return []
            self.n_paths += 1
            self.paths.append(path)
            self.route_ids.append(ack.route_id)
            self.current = None
            self.current_next = None
            return self._new_path()
        self.relays.pop(ack.route_id, None)
        return [Send(down, ack)]

    def on_packet(self, packet: object, sender: int) -> tuple[LinkResponse, list[Send]]:
        if isinstance(packet, GsaMessage):
            return self.on_gsa(packet, sender)
        if isinstance(packet, RoutingAck):
            return LinkResponse.ACK, self.on_routing_ack(packet, sender)
        if isinstance(packet, RoutingNack):
            return LinkResponse.ACK, self.on_routing_nack(packet, sender)
        raise TypeError(f"not a search packet: {packet!r}")


class IdealTransport:
    """Lossless, zero-latency FIFO delivery of search packets between agents."""

    def __init__(self, agents: Mapping[int, GsaAgent], adj: Mapping[int, set[int]]):
        self.agents = agents
        self.adj = adj
        self.queue: deque[tuple[int, Send]] = deque()
        self.delivered = 0

    def push(self, sender: int, sends: Iterable[Send]) -> None:
        for s in sends:
            self.queue.append((sender, s))

    def run(self, max_steps: int = 10_000_000) -> int:
        steps = 0
        while self.queue and steps < max_steps:
            sender, send = self.queue.popleft()
            steps += 1
            if send.dest not in self.adj.get(sender, ()):
                # unreachable neighbor behaves like a MAC-level failure
                if isinstance(send.packet, GsaMessage):
                    self.push(sender, self.agents[sender].on_link_failure(send.packet, send.dest))
                continue
            self.delivered += 1
            response, out = self.agents[send.dest].on_packet(send.packet, sender)
            self.push(send.dest, out)
            if isinstance(send.packet, GsaMessage):
                self.push(sender, self.agents[sender].on_link_response(send.packet, send.dest, response))
        return steps


def build_paths_ideal(
    adj: Mapping[int, set[int]],
    neighbor_info: Mapping[int, Mapping[int, tuple[int, float]]],
    heads: Iterable[int],
    k_paths: int = 5,
    origins: Iterable[int] | None = None,
    sequential: bool = True,
    **agent_kwargs,
) -> tuple[dict[int, GsaAgent], dict[int, RoutingTable]]:
    """Run the search for every origin over :class:`IdealTransport`.

    ``neighbor_info[n]`` is node ``n``'s neighbor table (id -> (hop, rssi)).
    With ``sequential`` the origins search one after another in id order.
    """
    heads = set(heads)
    hops = {
        nid: min((h for h, _ in neighbor_info[nid].values()), default=UNDEFINED_HOP - 1) + 1
        for nid in adj
        if nid not in heads
    }
    tables = {nid: RoutingTable() for nid in adj}
    agents = {
        nid: GsaAgent(
            nid,
            nid in heads,
            (lambda info=neighbor_info[nid]: info),
            tables[nid],
            k_paths=k_paths,
            own_hop=(lambda h=hops.get(nid, 0): h),
            **agent_kwargs,
        )
        for nid in adj
    }
    transport = IdealTransport(agents, adj)
    order = sorted(origins) if origins is not None else sorted(n for n in adj if n not in heads)
    if sequential:
        for nid in order:
            transport.push(nid, agents[nid].start())
            transport.run()
    else:
        for nid in order:
            transport.push(nid, agents[nid].start())
        transport.run()
    return agents, tables
