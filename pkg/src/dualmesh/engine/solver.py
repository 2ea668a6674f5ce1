"""Fluid-flow airtime model solved by progressive filling (max-min fairness)."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Optional

from ..core import Band, Channel
from ..radio import (AttenuationMatrix, ContentionClique, Interferer, PropagationParams,
                     build_contention_cliques)

EPS = 1e-12


@dataclass(frozen=True)
class Link:
    tx: int
    rx: int
    channel: Channel
    capacity: float  # usable bits/s: eta * bit_rate * (1 - fer)


@dataclass
class FlowDemand:
    id: str
    links: list[Link]
    offered: float


@dataclass
class RateProblem:
    """Everything needed to turn routed flows into rates."""

    flows: list[FlowDemand]
    matrix: AttenuationMatrix
    tx_power: Mapping[int, float]
    interferers: list[Interferer] = field(default_factory=list)
    prop: PropagationParams = field(default_factory=PropagationParams)
    extra_utilization: Mapping[tuple[int, Channel], float] = field(default_factory=dict)

    def transmitters(self) -> set[tuple[int, Channel]]:
        return {(l.tx, l.channel) for f in self.flows for l in f.links}

    def cliques(self) -> list[ContentionClique]:
        return build_contention_cliques(self.transmitters(), self.interferers, self.matrix,
                                        self.tx_power, self.prop, self.extra_utilization)

    def to_dict(self) -> dict:
        ids = self.matrix.ids
        return {
            "ids": ids,
            "attenuation": [[_num(v) for v in row] for row in self.matrix.values.tolist()],
            "tx_power": {str(k): v for k, v in sorted(self.tx_power.items())},
            "interferers": [{"id": i.id, "band": i.band.value, "channel": i.channel,
                             "utilization": i.utilization, "tx_power": i.tx_power}
                            for i in self.interferers],
            "prop": asdict(self.prop),
            "flows": [{"id": f.id, "offered": f.offered,
                       "links": [[l.tx, l.rx, l.channel.band.value, l.channel.index, l.capacity]
                                 for l in f.links]} for f in self.flows],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RateProblem":
        m = AttenuationMatrix(d["ids"])
        for i, row in enumerate(d["attenuation"]):
            for j, v in enumerate(row):
                if i < j:
                    m.set(d["ids"][i], d["ids"][j], math.inf if v is None else v)
        intfs = [Interferer(i["id"], Band(i["band"]), i["utilization"], i["channel"], i["tx_power"])
                 for i in d["interferers"]]
        flows = [FlowDemand(f["id"], [Link(a, b, Channel(Band(band), idx), cap)
                                      for a, b, band, idx, cap in f["links"]], f["offered"])
                 for f in d["flows"]]
        return cls(flows, m, {int(k): v for k, v in d["tx_power"].items()}, intfs,
                   PropagationParams(**d["prop"]))


def _num(v: float):
    return None if math.isinf(v) else v


@dataclass
class RateAssignment:
    rates: dict[str, float]
    utilization: dict[tuple, float]
    bottleneck: dict[str, Optional[tuple]]  # clique key, or None when demand-limited
    cliques: list[ContentionClique] = field(default_factory=list)


def coefficients(flows: list[FlowDemand], cliques: list[ContentionClique]) -> dict[tuple, dict[str, float]]:
    """Airtime per bit/s that each flow spends in each clique (summed over its hops)."""
    out: dict[tuple, dict[str, float]] = {}
    for c in cliques:
        row = {}
        for f in flows:
            a = sum(1.0 / l.capacity for l in f.links
                    if l.channel == c.channel and l.tx in c.members and l.capacity > 0)
            if a > 0:
                row[f.id] = a
        out[c.key] = row
    return out


def solve_rates(flows: list[FlowDemand], cliques: list[ContentionClique]) -> RateAssignment:
    """Raise every unfrozen flow together until a clique fills or the flow hits its demand."""
    rates = {f.id: 0.0 for f in flows}
    bottleneck: dict[str, Optional[tuple]] = {}
    coef = coefficients(flows, cliques)
    residual = {c.key: max(0.0, 1.0 - c.external_utilization) for c in cliques}
    offered = {f.id: f.offered for f in flows}
    active: dict[str, None] = {}  # insertion-ordered so float sums are reproducible
    for f in flows:
        if not f.links or f.offered <= 0 or any(l.capacity <= 0 for l in f.links):
            bottleneck[f.id] = None
        else:
            active[f.id] = None

    while active:
        step = math.inf
        for key, row in coef.items():
            load = sum(a for fid, a in row.items() if fid in active)
            if load > 0:
                step = min(step, residual[key] / load)
        for fid in active:
            step = min(step, offered[fid] - rates[fid])
        step = max(step, 0.0)
        for fid in active:
            rates[fid] += step
        for key, row in coef.items():
            residual[key] -= step * sum(a for fid, a in row.items() if fid in active)
        frozen = set()
        for key in sorted(coef):
            row = coef[key]
            if residual[key] <= EPS * max(1.0, sum(row.values())) and any(f in active for f in row):
                for fid in row:
                    if fid in active and fid not in frozen:
                        frozen.add(fid)
                        bottleneck[fid] = key
        for fid in active:
            if rates[fid] >= offered[fid] * (1 - EPS) and fid not in frozen:
                frozen.add(fid)
                bottleneck[fid] = None
        if not frozen:  # numerical corner: freeze the tightest clique outright
            key = min((k for k, row in coef.items() if any(f in active for f in row)),
                      key=lambda k: residual[k])
            frozen = {fid for fid in coef[key] if fid in active}
            for fid in frozen:
                bottleneck[fid] = key
        active = {fid: None for fid in active if fid not in frozen}

    util = {c.key: c.external_utilization + sum(a * rates[fid] for fid, a in coef[c.key].items())
            for c in cliques}
    return RateAssignment(rates, util, bottleneck, list(cliques))


def solve_problem(problem: RateProblem) -> RateAssignment:
    return solve_rates(problem.flows, problem.cliques())
