"""Walk through the start-up of a 3-floor building network.

Every node wakes at t = 1 s, learns its hop-count to the cluster head from
advertisements, then searches for up to five node-disjoint paths to the
head. The script runs one seeded simulation and prints what a few nodes
ended up with.

    python demos/preliminary_phase.py [seed]
"""

import sys

from blemesh.config import defaults
from blemesh.scenario import run_case1
from blemesh.topology import hop_distances


def main(seed: int = 1) -> None:
    cfg = defaults("case1")
    result = run_case1(cfg, seed)
    world = result.world
    bfs = hop_distances(world.adj, world.heads)

    print(f"seed {seed}: {len(world.nodes)} nodes, head(s) {sorted(world.heads)}")
    print(f"mean discovery delay  {result.mean_discovery_delay():6.2f} s")
    print(f"mean all-phase delay  {result.mean_all_phase():6.2f} s")
    print(f"mean power            {result.mean_power():6.2f} mW\n")

    # a corner node, a mid-floor node and a node next to the head
    for rec in result.ble_nodes():
        if rec.node_id not in (2, 8, 13, 22):
            continue
        node = world.nodes[rec.node_id]
        print(f"node {rec.node_id:2d}  hop {rec.hop_count} (bfs {bfs[rec.node_id]})  degree {rec.degree:2d}")
        for path in node.gsa.paths:
            print("    " + " -> ".join(str(n) for n in path))


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 1)
