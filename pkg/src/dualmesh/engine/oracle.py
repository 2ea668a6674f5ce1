"""Brute-force reference for the rate solver.

Cliques come from enumerating every subset of same-channel transmitters and
keeping the mutually-sensing ones; the max-min allocation is found by exact
rational bottleneck search. Nothing here calls into the solver or
``build_contention_cliques``.
"""

from __future__ import annotations

import random
from fractions import Fraction
from itertools import combinations

from ..core import CHANNELS, Band, Channel
from ..radio import AttenuationMatrix, Interferer, PropagationParams
from .solver import FlowDemand, Link, RateProblem


def _hears(problem: RateProblem, tx: int, rx: int) -> bool:
    att = problem.matrix.get(tx, rx)
    return att != float("inf") and problem.tx_power[tx] - att >= problem.prop.cs_threshold


def all_cliques(problem: RateProblem) -> list[tuple[Channel, frozenset, Fraction]]:
    txs: dict[Channel, list[int]] = {}
    for f in problem.flows:
        for l in f.links:
            txs.setdefault(l.channel, [])
            if l.tx not in txs[l.channel]:
                txs[l.channel].append(l.tx)
    out = []
    for ch, members in txs.items():
        for size in range(1, len(members) + 1):
            for group in combinations(sorted(members), size):
                if all(_hears(problem, a, b) and _hears(problem, b, a)
                       for a, b in combinations(group, 2)):
                    ext = Fraction(0)
                    for i in problem.interferers:
                        same = i.band is ch.band and (i.channel is None or i.channel == ch.index)
                        if same and any(problem.matrix.get(m, i.id) != float("inf")
                                        and i.tx_power - problem.matrix.get(m, i.id)
                                        >= problem.prop.cs_threshold for m in group):
                            ext += Fraction(i.utilization)
                    for m in group:
                        ext += Fraction(problem.extra_utilization.get((m, ch), 0.0))
                    out.append((ch, frozenset(group), min(ext, Fraction(1))))
    return out


def oracle_rates(problem: RateProblem) -> dict[str, Fraction]:
    constraints = []
    for ch, group, ext in all_cliques(problem):
        row = {}
        for f in problem.flows:
            a = sum((Fraction(1) / Fraction(l.capacity) for l in f.links
                     if l.channel == ch and l.tx in group and l.capacity > 0), Fraction(0))
            if a:
                row[f.id] = a
        constraints.append((1 - ext, row))

    rates: dict[str, Fraction] = {}
    unfrozen = []
    for f in problem.flows:
        if not f.links or f.offered <= 0 or any(l.capacity <= 0 for l in f.links):
            rates[f.id] = Fraction(0)
        else:
            unfrozen.append(f.id)
    offered = {f.id: Fraction(f.offered) for f in problem.flows}

    while unfrozen:
        # candidate fair level from every constraint touching an unfrozen flow
        levels = []
        for cap, row in constraints:
            free = sum((a for fid, a in row.items() if fid in unfrozen), Fraction(0))
            if free:
                used = sum((a * rates[fid] for fid, a in row.items() if fid in rates), Fraction(0))
                levels.append(((cap - used) / free, row))
        level = min([lv for lv, _ in levels] + [offered[fid] for fid in unfrozen])
        level = max(level, Fraction(0))
        done = {fid for fid in unfrozen if offered[fid] == level}
        for lv, row in levels:
            if lv == level:
                done |= {fid for fid in row if fid in unfrozen}
        for fid in done:
            rates[fid] = level
        unfrozen = [fid for fid in unfrozen if fid not in done]
    return rates


def random_problem(rng: random.Random, max_nodes: int = 6, max_flows: int = 6) -> RateProblem:
    """A random routed network: tree links on random channels, random losses and interferers."""
    n = rng.randint(1, max_nodes)
    ids = list(range(n))
    intf_ids = [100 + k for k in range(rng.randint(0, 2))]
    m = AttenuationMatrix(ids + intf_ids)
    for a, b in combinations(ids + intf_ids, 2):
        m.set(a, b, rng.choice([60.0, 75.0, 90.0, 101.0, 110.0, float("inf")]))
    tx_power = {i: 20.0 for i in ids + intf_ids}
    parent = {i: rng.randrange(i) for i in ids[1:]}
    channels = [Channel(b, c) for b in Band for c in CHANNELS[b][:2]]
    hop_channel = {i: rng.choice(channels) for i in ids[1:]}

    def link(a: int, b: int) -> Link:
        ch = hop_channel[a] if parent.get(a) == b else hop_channel[b]
        fer = rng.choice([0.0, 0.0, 0.1, 0.25, 0.5])
        return Link(a, b, ch, 0.5 * 11e6 * (1 - fer))

    links = {}
    flows = []
    for k in range(rng.randint(0, max_flows) if n > 1 else 0):
        src = rng.choice(ids[1:])
        path = [src]
        while path[-1] != 0:
            path.append(parent[path[-1]])
        hops = []
        for a, b in zip(path, path[1:]):
            if (a, b) not in links:
                links[(a, b)] = link(a, b)
            hops.append(links[(a, b)])
        offered = rng.choice([0.5e6, 1e6, 3e6, 20e6])
        flows.append(FlowDemand(f"f{k}", hops, offered))
    intfs = [Interferer(i, rng.choice(list(Band)), rng.choice([0.1, 0.3, 0.5]),
                        rng.choice([None, CHANNELS[Band.B24][0], CHANNELS[Band.B58][0]]))
             for i in intf_ids]
    intfs = [i if i.channel is None or i.channel in CHANNELS[i.band] else
             Interferer(i.id, i.band, i.utilization, None, i.tx_power) for i in intfs]
    return RateProblem(flows, m, tx_power, intfs, PropagationParams())
