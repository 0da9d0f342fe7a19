"""Three acknowledged uplink packets: stored disjoint paths against flooding.

Both protocols start from a converged network. With stored paths a packet
follows one unicast route and the ack comes back along it. With flooding
every node relays each message once, so every node pays for every packet.

    python demos/uplink_vs_flooding.py [runs]
"""

import statistics
import sys

from blemesh.config import defaults
from blemesh.network import FLOODING, PROPOSED
from blemesh.scenario import run_case2


def one(protocol: str, seed: int) -> tuple[list[float], float]:
    cfg = defaults("case2").with_overrides(protocol=protocol)
    r = run_case2(cfg, seed)
    lat = [p.latency_s for p in r.packets if p.latency_s is not None]
    return lat, r.mean_power()


def main(runs: int = 3) -> None:
    print(f"{'protocol':<10}{'latency (s)':>14}{'power (mW)':>13}{'lost':>6}")
    for protocol in (PROPOSED, FLOODING):
        lats, powers, lost = [], [], 0
        for seed in range(1, runs + 1):
            lat, power = one(protocol, seed)
            lats += lat
            lost += 3 - len(lat)
            powers.append(power)
        print(f"{protocol:<10}{statistics.mean(lats):14.2f}{statistics.mean(powers):13.2f}{lost:6d}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 3)
