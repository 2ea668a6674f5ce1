import math

import pytest
from hypothesis import given, strategies as st

from dualmesh.core import AssocState, Band, Channel
from dualmesh.formation import join
from dualmesh.handoff import (Candidate, Hard, HandoffConfig, Orphaned, Soft, Stay, complete_handoff,
                              current_metric, decide, execute_handoff, expire, orphan, rank,
                              refresh_candidates, start_handoff)
from dualmesh.network import Network
from dualmesh.radio import AttenuationMatrix

CFG = HandoffConfig()
C24, C58 = Channel(Band.B24, 1), Channel(Band.B58, 36)


def cand(ap, band, metric, rssi=-50.0, t=0.0):
    return Candidate(ap, band, C24 if band is Band.B24 else C58, metric, rssi, t)


def test_config_validation():
    with pytest.raises(ValueError):
        HandoffConfig(scan_interval=0)
    with pytest.raises(ValueError):
        HandoffConfig(beacon_loss_limit=0)
    with pytest.raises(ValueError):
        HandoffConfig(soft_preference=0.9)


def test_good_link_stays():
    assert decide([cand(1, Band.B24, 100)], Band.B58, 2000, CFG) == Stay()


def test_degraded_prefers_same_band_within_factor():
    cands = rank([cand(1, Band.B24, 1000), cand(2, Band.B58, 1400)])
    assert decide(cands, Band.B58, 4000, CFG) == Soft(cands[1])


def test_degraded_goes_hard_when_same_band_too_slow():
    cands = rank([cand(1, Band.B24, 1000), cand(2, Band.B58, 1600)])
    assert decide(cands, Band.B58, 4000, CFG) == Hard(cands[0])


def test_best_on_same_band_is_soft():
    cands = rank([cand(1, Band.B58, 900), cand(2, Band.B24, 1000)])
    assert decide(cands, Band.B58, 4000, CFG) == Soft(cands[0])


def test_degraded_but_nothing_better_stays():
    assert decide([cand(1, Band.B24, 5000)], Band.B58, 4000, CFG) == Stay()
    assert decide([], Band.B58, 4000, CFG) == Stay()


def test_broken_link_without_candidates_orphans():
    with pytest.raises(Orphaned):
        decide([], Band.B58, math.inf, CFG)
    with pytest.raises(Orphaned):
        decide([], Band.B58, 500, CFG, link_broken=True)


def test_broken_link_takes_worse_candidate():
    c = cand(1, Band.B24, 9000)
    assert decide([c], Band.B58, math.inf, CFG) == Hard(c)


@given(st.lists(st.tuples(st.integers(1, 9), st.sampled_from(list(Band)), st.floats(100, 1e5)),
                max_size=6),
       st.sampled_from(list(Band)), st.floats(100, 1e5) | st.just(math.inf))
def test_decision_targets_are_known_candidates(raw, band, metric):
    cands = rank([cand(a, b, m) for a, b, m in raw])
    try:
        d = decide(cands, band, metric, CFG)
    except Orphaned:
        assert not cands and math.isinf(metric)
        return
    if isinstance(d, Stay):
        assert not math.isinf(metric)
        return
    assert d.target in cands
    assert isinstance(d, Soft) == (d.target.band is band)


def test_expire_drops_stale():
    c = [cand(1, Band.B24, 1, t=0.0), cand(2, Band.B24, 1, t=1.5)]
    assert expire(c, 2.5, 1.0) == [c[1]]


def two_relays() -> Network:
    """HW 0; relay 4 under HW with relay 5 under it; relay 1 under HW with edge 2."""
    ids = [0, 1, 2, 4, 5]
    m = AttenuationMatrix(ids)
    for a, b, d in [(0, 4, 60), (4, 5, 60), (0, 1, 60), (1, 2, 60), (1, 4, 62), (1, 5, 62),
                    (0, 2, 105), (2, 4, 105), (2, 5, 105), (0, 5, 105)]:
        m.set(a, b, d)
    net = Network.create("m", 0, C58, m)
    for n in (4, 5, 1, 2):
        net.add_mesh_node(n)
        join(net, n)
    return net


def _subtree(net, root):
    return {n: (net.nodes[n].parent, net.nodes[n].upstream.channel, net.nodes[n].serving.channel)
            for n in net.descendants(root)}


def test_refresh_excludes_self_and_subtree():
    net = two_relays()
    ids = [c.ap_id for c in refresh_candidates(net, 1, 0.0)]
    assert ids == [0, 4, 5]
    assert 2 not in ids


def test_soft_handoff_leaves_subtree_untouched():
    net = two_relays()
    before = _subtree(net, 1)
    serving = net.nodes[1].serving.channel
    target = next(c for c in refresh_candidates(net, 1, 0.0) if c.ap_id == 5)
    out = execute_handoff(net, 1, Soft(target))
    assert out.kind == "soft" and out.notified_children == []
    assert net.nodes[1].parent == (5, Band.B58)
    assert net.nodes[1].serving.channel == serving
    assert _subtree(net, 1) == before
    assert net.validate() == []


def test_hard_handoff_moves_serving_band_and_notifies_children():
    net = two_relays()
    target = next(c for c in refresh_candidates(net, 1, 0.0) if c.ap_id == 4)
    out = execute_handoff(net, 1, Hard(target))
    assert out.kind == "hard" and out.notified_children == [2]
    sw = net.nodes[1]
    assert sw.upstream.channel == C24 and sw.serving.band is Band.B58
    # the child's uplink no longer matches until it re-associates
    assert net.validate() != []


def test_complete_handoff_refusal_keeps_reassociating():
    net = two_relays()
    target = next(c for c in refresh_candidates(net, 1, 0.0) if c.ap_id == 5)
    start_handoff(net, 1, target)
    net.departed.add(5)
    with pytest.raises(LookupError):
        complete_handoff(net, 1, target)
    assert net.nodes[1].assoc is AssocState.REASSOCIATING


def test_orphan_disowns_children():
    net = two_relays()
    kids = orphan(net, 1)
    assert kids == [2]
    assert net.nodes[1].assoc is AssocState.SCANNING and net.nodes[2].parent is None
    assert all(r.channel is None for r in net.nodes[1].radios)


def test_current_metric_infinite_when_parent_silent():
    net = two_relays()
    assert current_metric(net, 1) == pytest.approx(844.7272727, rel=1e-6)
    net.matrix.set(0, 1, math.inf)
    assert math.isinf(current_metric(net, 1))
