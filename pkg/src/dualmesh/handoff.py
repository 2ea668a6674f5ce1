"""Background candidate scanning and the stay / soft / hard handoff rule."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

from .core import AssocState, Band, Channel
from .formation import (activate_serving, association_ok, scan, tune_upstream)
from .metric import link_quality, rank_candidates
from .network import Network


class Orphaned(RuntimeError):
    pass


@dataclass(frozen=True)
class HandoffConfig:
    scan_interval: float = 1.0
    quality_threshold: float = 3000.0
    beacon_loss_limit: int = 3
    soft_preference: float = 1.5

    def __post_init__(self):
        if self.scan_interval <= 0 or self.quality_threshold <= 0:
            raise ValueError("scan interval and quality threshold must be positive")
        if self.beacon_loss_limit < 1 or self.soft_preference < 1:
            raise ValueError("beacon loss limit and soft preference must be >= 1")


@dataclass(frozen=True)
class Candidate:
    ap_id: int
    band: Band
    channel: Channel
    metric: float
    rssi: float
    timestamp: float


@dataclass(frozen=True)
class Stay:
    pass


@dataclass(frozen=True)
class Soft:
    target: Candidate


@dataclass(frozen=True)
class Hard:
    target: Candidate


Decision = Union[Stay, Soft, Hard]


def rank(cands: list[Candidate]) -> list[Candidate]:
    return [e[3] for e in rank_candidates([(c.ap_id, c.metric, c.rssi, c) for c in cands])]


def refresh_candidates(net: Network, node_id: int, now: float) -> list[Candidate]:
    """Scan both bands, score every audible AP and drop ourselves and our subtree."""
    exclude = net.descendants(node_id) | {node_id}
    cands = []
    for e in scan(net, node_id, exclude=exclude):
        m = link_quality(net.airtime, e.observation, net.load_weight)
        cands.append(Candidate(e.beacon.ap_id, e.beacon.band, e.beacon.channel, m, e.rssi, now))
    return rank(cands)


def expire(cands: list[Candidate], now: float, scan_interval: float) -> list[Candidate]:
    return [c for c in cands if now - c.timestamp <= 2.0 * scan_interval]


def current_metric(net: Network, node_id: int) -> float:
    """Link quality of the present uplink; infinite when the parent is unheard."""
    node = net.nodes[node_id]
    if node.parent is None or node.upstream is None:
        return math.inf
    obs = net.observe(node.parent[0], node_id, node.upstream.channel)
    if obs is None:
        return math.inf
    return link_quality(net.airtime, obs, net.load_weight)


def decide(cands: list[Candidate], upstream_band: Band, metric: float, cfg: HandoffConfig,
           link_broken: bool = False) -> Decision:
    broken = link_broken or math.isinf(metric)
    if not broken and metric <= cfg.quality_threshold:
        return Stay()
    if not cands:
        if broken:
            raise Orphaned("uplink lost and no candidate AP known")
        return Stay()
    best = cands[0]
    if not broken and best.metric >= metric:
        # degraded but nothing better is known: moving only adds churn
        return Stay()
    same = next((c for c in cands if c.band is upstream_band), None)
    if (same is not None and same.metric <= cfg.soft_preference * best.metric
            and (broken or same.metric < metric)):
        return Soft(same)
    if best.band is upstream_band:
        return Soft(best)
    return Hard(best)


def start_handoff(net: Network, node_id: int, target: Candidate) -> Optional[int]:
    """Tear down the old association; returns the old parent id."""
    node = net.nodes[node_id]
    old = net.detach(node_id)
    node.transition(AssocState.REASSOCIATING, target.ap_id)
    return old


def complete_handoff(net: Network, node_id: int, target: Candidate) -> tuple[bool, list[int]]:
    """Associate to ``target``. Returns (serving radio moved, children to notify).

    Raises ``LookupError`` when the target refuses; the node stays Reassociating
    so the caller can try the next candidate.
    """
    node = net.nodes[node_id]
    if node.assoc is not AssocState.REASSOCIATING:
        raise RuntimeError(f"node {node_id} is not reassociating")
    if not association_ok(net, node_id, target.ap_id, target.channel):
        raise LookupError(f"AP {target.ap_id} refused or unreachable on {target.channel}")
    old_band = node.upstream.band if node.upstream else None
    old_serving = node.serving.channel if node.serving else None
    tune_upstream(net, node_id, target.channel)
    net.attach(node_id, target.ap_id)
    node.transition(AssocState.ASSOCIATED)
    moved = False
    if node.serving is None or (not net.single_band and node.serving.band is target.channel.band):
        activate_serving(net, node_id)
        moved = node.serving.channel != old_serving
    elif net.single_band and old_band is not None and node.serving.channel == target.channel \
            and net.channel_policy != "shared":
        activate_serving(net, node_id)
        moved = node.serving.channel != old_serving
    notify = sorted(node.children) if moved else []
    return moved, notify


def orphan(net: Network, node_id: int) -> list[int]:
    """Drop to Scanning: detach, switch radios off, disown children. Returns the children."""
    node = net.nodes[node_id]
    net.detach(node_id)
    children = sorted(node.children)
    for c in children:
        net.detach(c)
    for r in node.radios:
        r.deactivate()
    node.mac_table.clear()
    node.transition(AssocState.SCANNING)
    return children


@dataclass
class HandoffOutcome:
    kind: str
    target: int
    notified_children: list[int]


def execute_handoff(net: Network, node_id: int, decision: Decision) -> HandoffOutcome:
    """Run a non-Stay decision to completion without timers."""
    if isinstance(decision, Stay):
        raise ValueError("nothing to execute for Stay")
    start_handoff(net, node_id, decision.target)
    _, notify = complete_handoff(net, node_id, decision.target)
    kind = "soft" if isinstance(decision, Soft) else "hard"
    return HandoffOutcome(kind, decision.target.ap_id, notify)
