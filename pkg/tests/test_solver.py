import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from dualmesh.core import Band, Channel
from dualmesh.engine.oracle import all_cliques, oracle_rates, random_problem
from dualmesh.engine.report import DeliverySegment, WindowError, average_throughput, throughput
from dualmesh.engine.solver import (FlowDemand, Link, RateProblem, coefficients, solve_problem,
                                    solve_rates)
from dualmesh.radio import AttenuationMatrix, ContentionClique, Interferer
from conftest import relay_matrix
import oracles

C24, C58 = Channel(Band.B24, 1), Channel(Band.B58, 36)
CAP = oracles.ETA * oracles.RATE
TX = {i: 20.0 for i in (0, 1, 2, 3, 100)}


def fig1_problem(single: bool, offered=20e6) -> RateProblem:
    up = C24 if single else C58
    flows = [FlowDemand(f"e{e}", [Link(e, 1, C24, CAP), Link(1, 0, up, CAP)], offered) for e in (2, 3)]
    return RateProblem(flows, relay_matrix(), TX)


def test_fig1_dual_per_flow_rate():
    r = solve_problem(fig1_problem(False)).rates
    assert r == {"e2": pytest.approx(oracles.DUAL_PER_FLOW), "e3": pytest.approx(oracles.DUAL_PER_FLOW)}


def test_fig1_single_shared_per_flow_rate():
    r = solve_problem(fig1_problem(True)).rates
    assert r["e2"] == pytest.approx(oracles.SINGLE_SHARED_PER_FLOW)
    assert r["e2"] == pytest.approx(r["e3"])


def test_demand_limited_flow_frees_capacity():
    p = fig1_problem(False)
    p.flows[0].offered = 1e6
    res = solve_problem(p)
    assert res.rates["e2"] == pytest.approx(1e6) and res.bottleneck["e2"] is None
    assert res.rates["e3"] == pytest.approx(CAP - 1e6)


def test_interferer_shrinks_residual_airtime():
    m = relay_matrix()
    m.add(100, {n: 70 for n in (0, 1, 2, 3)})
    p = fig1_problem(False)
    p.matrix = m
    p.interferers = [Interferer(100, Band.B24, 0.3)]
    assert solve_problem(p).rates["e2"] == pytest.approx(0.7 * CAP / 2)


def test_routeless_or_dead_flows_get_zero():
    flows = [FlowDemand("a", [], 1e6), FlowDemand("b", [Link(2, 1, C24, 0.0)], 1e6),
             FlowDemand("c", [Link(2, 1, C24, CAP)], 0.0)]
    assert solve_rates(flows, []).rates == {"a": 0.0, "b": 0.0, "c": 0.0}


def test_problem_round_trips_through_dict():
    p = random_problem(random.Random(3))
    q = RateProblem.from_dict(p.to_dict())
    assert q.to_dict() == p.to_dict()
    assert solve_problem(q).rates == solve_problem(p).rates


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**6))
def test_solver_agrees_with_exact_oracle(seed):
    p = random_problem(random.Random(seed))
    got = solve_problem(p).rates
    want = oracle_rates(p)
    assert set(got) == set(want)
    for k, v in want.items():
        assert got[k] == pytest.approx(float(v), rel=1e-6, abs=1e-6)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**6))
def test_allocation_is_feasible_and_max_min(seed):
    p = random_problem(random.Random(seed))
    res = solve_problem(p)
    # feasible against every mutually-sensing group, maximal or not
    for ch, group, ext in all_cliques(p):
        used = sum(res.rates[f.id] / l.capacity for f in p.flows for l in f.links
                   if l.channel == ch and l.tx in group and l.capacity > 0)
        assert used <= 1 - float(ext) + 1e-9
    # every flow is either satisfied or has a full clique where it is among the largest
    for f in p.flows:
        rate = res.rates[f.id]
        assert 0 <= rate <= f.offered * (1 + 1e-9)
        key = res.bottleneck.get(f.id)
        if key is None:
            continue
        assert res.utilization[key] == pytest.approx(1.0, abs=1e-9)
        sharers = [g for g, a in coefficients(p.flows, res.cliques)[key].items()]
        assert rate >= max(res.rates[g] for g in sharers) * (1 - 1e-9)


def test_report_matches_hand_formula():
    segs = [DeliverySegment(0, 10, "a", 0, 1e6), DeliverySegment(5, 20, "b", 2, 2e6)]
    rep = throughput(segs, (4, 14), [0, 1, 2])
    assert rep.received_bits == {0: 6e6, 1: 0.0, 2: 18e6}
    assert rep.average_bps == pytest.approx(oracles.eq1([6e6, 0, 18e6], 10, 3))
    assert rep.flow_rates == {"a": pytest.approx(0.6e6), "b": pytest.approx(1.8e6)}


def test_report_rejects_bad_windows():
    with pytest.raises(WindowError):
        throughput([], (5, 5), [0])
    with pytest.raises(WindowError):
        average_throughput({}, 1.0, 0)
