import dataclasses
import statistics

import pytest

from blemesh.channel import ADV_CHANNELS
from blemesh.engine import EventKind, millis, seconds
from blemesh.mac import MacConfig, Mode
from blemesh.network import NetConfig

from conftest import call_at, spec

THREE = [spec(1, 0, head=True), spec(2, 5), spec(3, 10)]


def cfg_with(**mac):
    return NetConfig(mac=dataclasses.replace(MacConfig(), **mac))


def test_config_properties():
    m = MacConfig()
    assert m.airtime == 240
    assert m.adv_slot == 2 * 240 + 150
    with pytest.raises(ValueError):
        MacConfig(scan_window=millis(20))
    with pytest.raises(ValueError):
        MacConfig(retx_limit=0)


def adv_starts(world, node):
    return [t for t, _, target, kind in world.sim.log if target == node and kind == EventKind.ADV_TX_START.value]


@pytest.mark.parametrize("node, interval", [(1, millis(100)), (2, seconds(1.0))])
def test_adv_period(recorder_world, node, interval):
    world, _ = recorder_world(THREE, trace=True)
    world.macs[node].power_on(0)
    world.run(seconds(20))
    starts = adv_starts(world, node)
    gaps = [b - a for a, b in zip(starts, starts[1:])]
    assert len(gaps) > 10
    assert min(gaps) >= interval
    assert max(gaps) <= interval + MacConfig().adv_random_delay_max


def test_zero_random_delay_is_periodic(recorder_world):
    world, _ = recorder_world(THREE, cfg_with(adv_random_delay_max=0), trace=True)
    world.macs[2].power_on(123)
    world.run(seconds(5))
    starts = adv_starts(world, 2)
    assert starts == [123 + k * seconds(1.0) for k in range(len(starts))]


def test_channel_order(recorder_world, monkeypatch):
    world, _ = recorder_world(THREE)
    sent = []
    original = world.broadcast_adv

    def spy(mac, pdu, payload, index):
        if mac.id == 2:
            sent.append((pdu.start, pdu.channel))
        original(mac, pdu, payload, index)

    monkeypatch.setattr(world, "broadcast_adv", spy)
    world.macs[2].power_on(0)
    world.run(seconds(3.5))
    channels = [c for _, c in sent]
    assert channels == list(ADV_CHANNELS) * 4
    # PDUs of one event are one slot apart
    assert sent[1][0] - sent[0][0] == MacConfig().adv_slot


def test_full_scan_duty(recorder_world):
    world, _ = recorder_world(THREE)
    mac = world.macs[2]
    mac.power_on(0)
    call_at(world, seconds(1), lambda: mac.enqueue(3, "p"))  # node 3 never powers on
    world.run(seconds(3))
    assert mac.scanning and mac.state.mode is Mode.SCANNING
    mac.finish(seconds(3))
    segs = mac.timeline.segments(seconds(1), seconds(3))
    busy = sum(e - s for state, s, e in segs if state != "sleep")
    assert busy == seconds(2)


def test_scan_channel_cycles(recorder_world):
    world, _ = recorder_world(THREE)
    mac = world.macs[2]
    mac.power_on(0)
    call_at(world, seconds(1), lambda: mac.enqueue(3, "p"))
    world.run(seconds(1))
    t0 = mac.scan_start
    seq = [mac.scan_channel_at(t0 + k * millis(10) + 1) for k in range(6)]
    assert seq == [37, 38, 39, 37, 38, 39]


def test_one_packet_clean_channel(recorder_world):
    world, recs = recorder_world(THREE)
    for nid in (2, 3):
        world.macs[nid].power_on(nid * 1000)
    call_at(world, seconds(1), lambda: world.macs[2].enqueue(3, "hello"))
    world.run(seconds(5))
    mac = world.macs[2]
    assert mac.tx_packets == 1 and mac.retransmissions == 0 and mac.sessions == 1
    assert [p for _, p, _ in recs[3].received] == ["hello"]
    (_, opened), = mac.session_log
    (done, packet, dest, _), = recs[2].responses
    assert (packet, dest) == ("hello", 3)
    m = MacConfig()
    assert done - opened == m.conn_setup + 2 * m.airtime + m.t_ifs
    assert recs[2].failures == []


def test_connection_wait_within_advertising_cycle():
    from blemesh.network import World
    from conftest import Recorder

    m = MacConfig()
    cycle = m.adv_interval + m.adv_random_delay_max
    waits = []
    for seed in range(30):
        world = World(THREE, NetConfig(), seed=seed, run_gsa=False)
        for nid, mac in world.macs.items():
            mac.upper = Recorder(nid, world.sim.now)
        world.macs[2].power_on(0)
        world.macs[3].power_on(int(world.rngs.stream("phase").integers(0, seconds(1))))
        call_at(world, seconds(2), lambda: world.macs[2].enqueue(3, "p"))
        world.run(seconds(10))
        waits.append(world.macs[2].session_log[0][1] - seconds(2))
    # a uniformly placed request waits half a cycle on average; at most one event is missed
    assert statistics.mean(waits) <= 0.75 * cycle
    assert max(waits) <= 2 * cycle


def test_three_packets_one_session(recorder_world):
    world, recs = recorder_world(THREE)
    for nid in (2, 3):
        world.macs[nid].power_on(0)
    call_at(world, seconds(1), lambda: [world.macs[2].enqueue(3, p) for p in ("a", "b", "c")])
    world.run(seconds(5))
    assert world.macs[2].sessions == 1
    assert [p for _, p, _ in recs[3].received] == ["a", "b", "c"]
    assert [r[1] for r in recs[2].responses] == ["a", "b", "c"]
    assert not world.macs[2].busy and not world.macs[3].busy


@pytest.mark.parametrize("seed", range(10))
def test_ack_loss_deduplicated(recorder_world, seed):
    world, recs = recorder_world(THREE, cfg_with(ack_loss_prob=0.5), seed=seed)
    for nid in (2, 3):
        world.macs[nid].power_on(0)
    call_at(world, seconds(1), lambda: [world.macs[2].enqueue(3, p) for p in range(4)])
    world.run(seconds(30))
    got = [p for _, p, _ in recs[3].received]
    assert got == sorted(set(got))
    assert world.macs[3].delivered_up == len(got)


def test_lost_acks_exhaust_retransmissions(recorder_world):
    world, recs = recorder_world(THREE, cfg_with(ack_loss_prob=1.0))
    for nid in (2, 3):
        world.macs[nid].power_on(0)
    call_at(world, seconds(1), lambda: world.macs[2].enqueue(3, "x"))
    mac = world.macs[2]
    t = seconds(1)
    while mac.sessions < 1:
        t += millis(1)
        world.run(t)
    world.run(t + millis(50))
    # one session: original plus retx_limit copies, then torn down and scanning again
    assert mac.tx_packets == 1 + MacConfig().retx_limit
    assert mac.session is None and mac.scanning
    assert len(recs[3].received) == 1
    world.run(seconds(10))
    assert len(recs[3].received) == 1  # later sessions resend the same sequence number


@pytest.mark.parametrize("window", [seconds(6.0), seconds(12.0)])
def test_failure_declared_after_window(recorder_world, window):
    world, recs = recorder_world(THREE, cfg_with(failure_declare_window=window))
    world.macs[2].power_on(0)
    call_at(world, seconds(1), lambda: world.macs[2].enqueue(3, "lost"))
    world.run(seconds(30))
    (at, dest, packets), = recs[2].failures
    assert (at, dest, packets) == (seconds(1) + window, 3, ["lost"])
    assert not world.macs[2].scanning


def test_late_advertiser_prevents_failure(recorder_world):
    world, recs = recorder_world(THREE)
    world.macs[2].power_on(0)
    call_at(world, seconds(1), lambda: world.macs[2].enqueue(3, "late"))
    world.macs[3].power_on(seconds(1 + 5.8))
    world.run(seconds(20))
    assert recs[2].failures == []
    assert [p for _, p, _ in recs[3].received] == ["late"]


def test_mutual_queues_do_not_deadlock(recorder_world):
    for seed in range(10):
        world, recs = recorder_world(THREE, seed=seed)
        for nid in (2, 3):
            world.macs[nid].power_on(nid * 777)
        call_at(world, seconds(1), lambda: (world.macs[2].enqueue(3, "to3"), world.macs[3].enqueue(2, "to2")))
        world.run(seconds(1 + 6))
        assert recs[2].failures == [] and recs[3].failures == []
        assert [p for _, p, _ in recs[3].received] == ["to3"]
        assert [p for _, p, _ in recs[2].received] == ["to2"]
        assert world.macs[2].adv_while_scanning + world.macs[3].adv_while_scanning > 0


def test_discovery_traffic_does_not_open_sessions(recorder_world):
    world, recs = recorder_world(THREE)
    recs[2].discovering = True
    for nid in (1, 2, 3):
        world.macs[nid].power_on(0)
    call_at(world, seconds(1), world.macs[2].update_scan)
    world.run(seconds(4))
    assert {s for _, s in recs[2].heard} == {1, 3}
    assert world.macs[2].sessions == 0 and world.macs[2].conn_requests == 0


def test_overlapping_connection_requests_collide(recorder_world):
    specs = [spec(1, 0, head=True), spec(2, 5), spec(3, 5, 3), spec(4, 10)]
    world, recs = recorder_world(specs)
    for nid in (2, 3):
        world.macs[nid].power_on(0)

    def both():
        for nid in (2, 3):
            world.macs[nid].enqueue(4, f"from{nid}")
            world.macs[nid].scan_start = world.macs[2].scan_start  # same channel at the same time

    call_at(world, seconds(1), both)
    world.macs[4].power_on(seconds(1.5))
    world.run(seconds(1.5) + 3 * MacConfig().adv_slot)
    assert world.macs[4].conn_collisions == 2
    assert world.macs[2].sessions == world.macs[3].sessions == 0
    assert world.macs[2].scanning and world.macs[3].scanning
    # randomized backoff separates the two afterwards
    world.run(seconds(6))
    assert sorted(p for _, p, _ in recs[4].received) == ["from2", "from3"]
