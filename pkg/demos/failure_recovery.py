"""Recovering from a dead relay on a 5-hop route.

A node 5 hops from the head sends one packet while a relay on its first
path is down. Two ways out:

* multi-path (MP): the failure travels back to the origin, which retries
  on its next stored path;
* hop-back (HB): the node that noticed the failure rediscovers its
  neighbourhood and hands the packet sideways.

The closed-form latencies say MP wins near the origin and HB near the
head. The adaptive mode picks whichever the formulas favour. The script
prints the prediction, then simulates each choice for every relay position.
Simulated latencies also carry the 6 s wait before a link is declared dead,
which the formulas leave out, so compare the columns by rank.

    python demos/failure_recovery.py [seed]
"""

import sys
from dataclasses import replace

from blemesh.config import defaults
from blemesh.recovery import AdaptiveParams, RecoveryMode, choose_recovery, hb_latency, mp_latency
from blemesh.scenario import run_case3

Z = 5


def simulate(x: int, mode: RecoveryMode, seed: int) -> float | None:
    cfg = defaults("case3")
    cfg = replace(cfg, failure=replace(cfg.failure, x=x), recovery=replace(cfg.recovery, mode=mode))
    packet = run_case3(cfg, seed).packets[0]
    return packet.latency_s


def fmt(v: float | None) -> str:
    return f"{v:7.2f}" if v is not None else "   lost"


def main(seed: int = 1) -> None:
    print(f"route of {Z} hops, seed {seed}; latencies in seconds\n")
    print(" X  predicted HB  MP  pick |  sim MP  sim HB  adaptive")
    for x in range(1, Z):
        p = AdaptiveParams(Z, x)
        pick = choose_recovery(p).value
        mp = simulate(x, RecoveryMode.MP_ONLY, seed)
        hb = simulate(x, RecoveryMode.HB_ONLY, seed)
        ad = simulate(x, RecoveryMode.ADAPTIVE, seed)
        print(f"{x:2d}  {hb_latency(p):12.2f} {mp_latency(p):4.2f}  {pick:>4} | {fmt(mp)} {fmt(hb)} {fmt(ad)}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 1)
