import dataclasses

import pytest
from hypothesis import given
from hypothesis import strategies as st

from blemesh.engine import seconds
from blemesh.network import NetConfig, RecoveryConfig, World
from blemesh.recovery import (
    DOWNLINK,
    UPLINK,
    AdaptiveParams,
    Method,
    RecoveryMode,
    choose_recovery,
    decide,
    failure_coordinates,
    hb_latency,
    hb_select,
    hb_threshold,
    mp_latency,
)
from blemesh.routing import make_route_id

from conftest import spec


def test_latency_examples():
    assert hb_latency(AdaptiveParams(5, 3)) == pytest.approx(3.8, abs=1e-9)
    assert mp_latency(AdaptiveParams(5, 3)) == pytest.approx(3.5, abs=1e-9)
    assert hb_latency(AdaptiveParams(5, 4)) == pytest.approx(3.3, abs=1e-9)
    assert mp_latency(AdaptiveParams(5, 4)) == pytest.approx(4.0, abs=1e-9)


def test_boundaries():
    p = AdaptiveParams(5, 5)
    assert hb_latency(p) == pytest.approx(p.r + p.gamma)
    assert mp_latency(AdaptiveParams(5, 1)) == pytest.approx(0.5 * 5)


def test_threshold_and_switch_point():
    assert hb_threshold(AdaptiveParams(5, 1)) == pytest.approx(3.3)
    assert choose_recovery(AdaptiveParams(5, 3)) is Method.MP
    assert choose_recovery(AdaptiveParams(5, 4)) is Method.HB
    # no rediscovery cost: HB as soon as the failure is past the first hop
    assert hb_threshold(AdaptiveParams(5, 1, r=1e-12, alpha=1, beta=1)) == pytest.approx(1.0)
    assert choose_recovery(AdaptiveParams(5, 2, r=1e-9)) is Method.HB


def test_tie_goes_to_mp():
    # r = 1, gamma = 0.5: HB = 1 + 0.5 (Z - X + 1), MP = 0.5 (Z + X - 1); equal at X = 2
    p = AdaptiveParams(4, 2, r=1.0, gamma=0.5)
    assert hb_latency(p) == mp_latency(p)
    assert choose_recovery(p) is Method.MP


def test_invalid_params():
    with pytest.raises(ValueError):
        AdaptiveParams(3, 4)
    with pytest.raises(ValueError):
        AdaptiveParams(3, 1, gamma=0)


params = st.builds(
    lambda z, x, a, b, r, g: AdaptiveParams(z, min(x, z), a, b, r, g),
    st.integers(1, 30), st.integers(1, 30),
    st.floats(0, 5), st.floats(0, 5), st.floats(0.01, 10), st.floats(0.01, 2),
)


@given(params)
def test_choice_agrees_with_threshold(p):
    by_latency = Method.HB if hb_latency(p) < mp_latency(p) else Method.MP
    assert choose_recovery(p) is by_latency
    if abs(p.X - hb_threshold(p)) > 1e-9:
        assert (p.X > hb_threshold(p)) == (by_latency is Method.HB)


@given(params)
def test_monotone_in_failure_position(p):
    if p.X < p.Z:
        q = dataclasses.replace(p, X=p.X + 1)
        assert hb_latency(q) < hb_latency(p)
        assert mp_latency(q) > mp_latency(p)


def test_decide_modes():
    p = AdaptiveParams(5, 4)
    assert decide(RecoveryMode.ADAPTIVE, UPLINK, p) is Method.HB
    assert decide(RecoveryMode.ADAPTIVE, UPLINK, AdaptiveParams(5, 3)) is Method.MP
    assert decide(RecoveryMode.MP_ONLY, UPLINK, p) is Method.MP
    assert decide(RecoveryMode.HB_ONLY, UPLINK, AdaptiveParams(5, 1)) is Method.HB
    for mode in RecoveryMode:
        assert decide(mode, DOWNLINK, p) is Method.MP


def test_failure_coordinates_from_ttl():
    # origin 5 hops out; the detector is 3 hops along (ttl 2 left), so the failed node is hop 4
    assert failure_coordinates(5, 2) == (5, 4)
    assert failure_coordinates(5, 5) == (5, 1)
    assert failure_coordinates(3, -4) == (3, 3)


def test_hb_select():
    nbrs = {3: (1, -60.0), 4: (1, -50.0), 5: (0, -80.0), 6: (2, -40.0)}
    assert hb_select(nbrs) == 5
    assert hb_select(nbrs, {5}) == 4
    assert hb_select(nbrs, {3, 4, 5, 6}) is None


def net(mode):
    return NetConfig(recovery=RecoveryConfig(mode=mode))


# origin 2 reaches head 1 (40 m away) through any of five relays 20 m in between
FAN = [spec(1, 40, head=True), spec(2, 0)] + [spec(3 + i, 20, -8 + 4 * i) for i in range(5)]


def fan_world(failed_paths, mode=RecoveryMode.MP_ONLY, seed=3):
    w = World(FAN, net(mode), seed=seed)
    w.preinstall()
    w.wake_all(start_discovery=False)
    paths = w.nodes[2].gsa.paths
    assert len(paths) == 5 and all(len(p) == 3 for p in paths)
    for k in failed_paths:
        w.schedule_failure(paths[k][1], seconds(0.5))
    w.schedule_packet(1, 2, seconds(1), False)
    w.run(seconds(60))
    return w, w.records[1]


def test_mp_first_path_fails_second_used():
    w, rec = fan_world([0])
    assert rec.delivered and rec.route_id == make_route_id(2, 2)
    assert rec.recovery_choice == "MP"
    assert w.mp_retries == 1
    assert not w.nodes[2].table.get(make_route_id(2, 1)).active


def test_mp_four_failures_delivered_on_fifth_path():
    w, rec = fan_world([0, 1, 2, 3])
    assert rec.delivered and rec.route_id == make_route_id(2, 5)
    assert w.mp_retries == 4
    assert rec.hops == 2
    # each failed attempt costs one failure-declaration window
    assert rec.latency_s > 4 * 6.0


def test_mp_all_paths_failed_is_undeliverable():
    w, rec = fan_world(range(5))
    assert not rec.delivered and rec.undeliverable


# chain 2 - 3 - 4 - 1 with a sibling 5 of relay 4 that only relay 3 can reach
CHAIN = [spec(1, 60, head=True), spec(2, 0), spec(3, 20), spec(4, 40), spec(5, 40, 12)]


def chain_world(specs, mode, failed, seed=3):
    w = World(specs, net(mode), seed=seed)
    w.preinstall()
    w.wake_all(start_discovery=False)
    assert w.nodes[2].gsa.paths[0] == (2, 3, 4, 1)
    w.schedule_failure(failed, seconds(0.5))
    w.schedule_packet(1, 2, seconds(1), False)
    w.run(seconds(60))
    return w, w.records[1]


def test_hb_bypasses_failed_relay():
    w, rec = chain_world(CHAIN, RecoveryMode.HB_ONLY, 4)
    assert rec.recovery_choice == "HB"
    assert (rec.failure_x, rec.failure_head_distance) == (2, 1)
    assert rec.delivered
    # detector 3 reaches the head in Z - X + 1 = 2 hops, so 3 in total
    assert rec.hops == 3
    assert w.nodes[3].table.get(rec.route_id).next_hop_upstream == 5


def test_hb_without_alternative_falls_back_to_mp():
    w, rec = chain_world(CHAIN[:4], RecoveryMode.HB_ONLY, 4)
    assert w.hb_fallbacks == 1
    # the origin has no second path, so the fallback cannot deliver either
    assert rec.undeliverable and not rec.delivered


def test_adaptive_picks_mp_near_the_origin():
    w, rec = chain_world(CHAIN, RecoveryMode.ADAPTIVE, 4)
    assert rec.recovery_choice == "MP"
    assert rec.predicted_mp_s < rec.predicted_hb_s
