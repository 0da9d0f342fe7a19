import pytest

from blemesh.channel import Position
from blemesh.routing import LinkResponse
from blemesh.topology import BLE_NODE, HEAD, NodeSpec


def spec(nid, x, y=0.0, z=1.2, head=False):
    return NodeSpec(nid, Position(x, y, z), HEAD if head else BLE_NODE)


class Recorder:
    """Stand-in network layer that records what the MAC hands up."""

    def __init__(self, node_id, clock=None, discovering=False):
        self.node_id = node_id
        self.clock = clock or (lambda: 0)
        self.heard = []
        self.received = []
        self.responses = []
        self.failures = []
        self.discovering = discovering

    def adv_payload(self):
        from blemesh.discovery import AdvPayload

        return AdvPayload(self.node_id, 1)

    def on_adv_heard(self, adv, rssi):
        self.heard.append((self.clock(), adv.sender))

    def discovery_scanning(self):
        return self.discovering

    def on_packet(self, packet, sender):
        self.received.append((self.clock(), packet, sender))
        return LinkResponse.ACK

    def on_link_response(self, packet, dest, response):
        self.responses.append((self.clock(), packet, dest, response))

    def on_link_failure(self, dest, packets):
        self.failures.append((self.clock(), dest, list(packets)))


@pytest.fixture
def recorder_world():
    """Build a World whose nodes' MACs report to Recorders instead of the protocol stack."""
    from blemesh.network import NetConfig, World

    def make(specs, cfg=None, seed=1, trace=False):
        world = World(specs, cfg or NetConfig(), seed=seed, trace=trace, run_gsa=False)
        recs = {}
        for nid, mac in world.macs.items():
            recs[nid] = Recorder(nid, world.sim.now)
            mac.upper = recs[nid]
        return world, recs

    return make


def call_at(world, t, fn):
    """Run ``fn()`` as an event at simulation time ``t``."""
    world.sim.schedule(t, lambda ev: fn())


# one summary line per acceptance criterion, printed at the end of the session
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: (len(s.split()[1]), s)):
            terminalreporter.write_line(line)
