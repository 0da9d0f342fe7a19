"""Node deployments and the static connectivity graph."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .channel import FLOOR_HEIGHT_M, ChannelParams, Position, is_neighbor, path_loss

HEAD = "head"
BLE_NODE = "ble-node"


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class NodeSpec:
    id: int
    position: Position
    role: str = BLE_NODE

    @property
    def is_head(self) -> bool:
        return self.role == HEAD


def validate(nodes: Sequence[NodeSpec]) -> list[NodeSpec]:
    seen: set[int] = set()
    for n in nodes:
        if n.role not in (HEAD, BLE_NODE):
            raise TopologyError(f"node {n.id}: unknown role {n.role!r}")
        if n.id in seen:
            raise TopologyError(f"duplicate node id {n.id}")
        seen.add(n.id)
    if not any(n.is_head for n in nodes):
        raise TopologyError("topology has no head node")
    return sorted(nodes, key=lambda n: n.id)


def generate_paper_topology(
    row_spacing: float = 12.0,
    column_spacing: float = 12.0,
    columns: int = 5,
    floors: int = 3,
    node_height: float = 1.2,
    head_offset: tuple[float, float] = (0.0, 0.0),
) -> list[NodeSpec]:
    """Three-floor office deployment: a 2x5 grid per floor plus one head.

    Node 1 is the head, mounted on the ceiling of the central floor and
    centred over its grid. BLE nodes are numbered floor by floor, row by row.
    """
    nodes: list[NodeSpec] = []
    span_x = column_spacing * (columns - 1)
    central = floors // 2
    head_z = central * FLOOR_HEIGHT_M + FLOOR_HEIGHT_M
    nodes.append(
        NodeSpec(
            1,
            Position(span_x / 2 + head_offset[0], row_spacing / 2 + head_offset[1], head_z, floor=central),
            HEAD,
        )
    )
    nid = 2
    for k in range(floors):
        for row in range(2):
            for col in range(columns):
                pos = Position(col * column_spacing, row * row_spacing, k * FLOOR_HEIGHT_M + node_height, floor=k)
                nodes.append(NodeSpec(nid, pos))
                nid += 1
    return nodes


def generate_corridor_topology(rows: int = 3, columns: int = 6, spacing: float = 14.0, height: float = 1.2) -> list[NodeSpec]:
    """Single-floor ``rows x columns`` grid with the head in the middle of column 0.

    At the default 14 m spacing each node reaches its eight surrounding grid
    cells only, so the far column sits ``columns - 1`` hops from the head.
    """
    head_row = rows // 2
    nodes = [NodeSpec(1, Position(0.0, head_row * spacing, height, floor=0), HEAD)]
    nid = 2
    for col in range(columns):
        for row in range(rows):
            if col == 0 and row == head_row:
                continue
            nodes.append(NodeSpec(nid, Position(col * spacing, row * spacing, height, floor=0)))
            nid += 1
    return nodes


def parse_node_line(key: str, value: str) -> NodeSpec:
    """Parse ``node.<id> = <role>, x, y, z[, floor]``."""
    try:
        nid = int(key.split(".", 1)[1])
    except (IndexError, ValueError):
        raise TopologyError(f"malformed node key {key!r}") from None
    parts = [p.strip() for p in value.split(",")]
    if len(parts) not in (4, 5):
        raise TopologyError(f"node {nid}: expected 'role, x, y, z[, floor]', got {value!r}")
    role = parts[0]
    try:
        x, y, z = (float(p) for p in parts[1:4])
        floor = int(parts[4]) if len(parts) == 5 else None
        pos = Position(x, y, z, floor=floor)
    except ValueError as exc:
        raise TopologyError(f"node {nid}: malformed position {value!r} ({exc})") from None
    return NodeSpec(nid, pos, role)


def load_topology(config: Mapping[str, str]) -> list[NodeSpec]:
    """Build a node list from a topology config section.

    Either ``preset = paper-3floor | corridor`` (with optional preset keys) or
    explicit ``node.<id>`` lines.
    """
    preset = config.get("preset", "").strip()
    if preset == "paper-3floor":
        return validate(
            generate_paper_topology(
                row_spacing=float(config.get("row_spacing", 12.0)),
                head_offset=(float(config.get("head_offset_x", 0.0)), float(config.get("head_offset_y", 0.0))),
            )
        )
    if preset == "corridor":
        return validate(
            generate_corridor_topology(
                rows=int(config.get("rows", 3)),
                columns=int(config.get("columns", 6)),
                spacing=float(config.get("spacing", 14.0)),
            )
        )
    if preset:
        raise TopologyError(f"unknown topology preset {preset!r}")
    nodes = [parse_node_line(k, v) for k, v in config.items() if k.startswith("node.")]
    if not nodes:
        raise TopologyError("topology section declares no nodes")
    return validate(nodes)


def connectivity_graph(nodes: Iterable[NodeSpec], params: ChannelParams = ChannelParams()) -> dict[int, set[int]]:
    """Undirected adjacency: an edge joins two nodes within the path-loss threshold."""
    nodes = list(nodes)
    adj: dict[int, set[int]] = {n.id: set() for n in nodes}
    for i, a in enumerate(nodes):
        for b in nodes[i + 1:]:
            if is_neighbor(a.position, b.position, params):
                adj[a.id].add(b.id)
                adj[b.id].add(a.id)
    return adj


def rssi_table(nodes: Iterable[NodeSpec], adj: Mapping[int, set[int]], params: ChannelParams = ChannelParams()) -> dict[tuple[int, int], float]:
    """RSSI proxy (negative path loss) for every directed edge."""
    pos = {n.id: n.position for n in nodes}
    return {(a, b): -path_loss(pos[a], pos[b], params) for a in adj for b in adj[a]}


def hop_distances(adj: Mapping[int, set[int]], heads: Iterable[int]) -> dict[int, int]:
    """Multi-source BFS hop distance to the nearest head (unreachable nodes omitted)."""
    dist = {h: 0 for h in heads}
    queue = deque(dist)
    while queue:
        u = queue.popleft()
        for v in sorted(adj[u]):
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist
