"""The event loop: formation, handoff and traffic driven in strict (time, seq) order.

Data traffic is a fluid: whenever topology, flows or interference change, the
routed flows are handed to the rate solver and each flow's delivered rate is
held constant until the next change. Control activity (scans, associations,
beacon loss, disassociation, service discovery) happens as discrete events.
"""

from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import Optional

from ..core import CHANNELS, AssocState, Band, Channel
from ..formation import (NoAPAvailable, TargetVanished, complete_association, scan, select_ap)
from ..handoff import (Candidate, HandoffConfig, Hard, Orphaned, Soft, Stay, complete_handoff,
                       current_metric, decide, expire, orphan, rank, refresh_candidates,
                       start_handoff)
from ..metric import AirtimeParams, LoadTracker, link_quality, update_load
from ..network import Network
from ..radio import (AttenuationMatrix, Interferer, PropagationParams, log_distance_attenuation)
from ..scenario import AddNode, RemoveNode, Scenario, SetAttenuation, SetInterferer, scenario_hash
from ..traffic import (INTERNET, DedupCache, ServiceNotFound, deliver_frame, discover_service,
                       route_intact, uplink_path)
from .events import Event, EventKind, EventQueue
from .report import DeliverySegment, ThroughputReport, throughput
from .solver import FlowDemand, Link, RateAssignment, RateProblem, solve_problem

K = EventKind


class InvariantViolation(RuntimeError):
    pass


@dataclass
class HandoffRecord:
    node: int
    kind: str  # "soft", "hard" or "orphan"
    target: Optional[int]
    detected: float  # when the decision to move was taken
    completed: Optional[float] = None
    cause: str = "quality"  # "quality", "beacon_loss" or "disassoc"

    @property
    def latency(self) -> Optional[float]:
        return None if self.completed is None else self.completed - self.detected


@dataclass
class FlowState:
    id: str
    src: int
    dst: object
    offered: float
    active: bool = False
    route: Optional[list[int]] = None
    receiver: Optional[int] = None
    rate: float = 0.0
    since: float = 0.0
    # service flows only
    discovery_pending: bool = False
    needs_discovery: bool = False
    service_route: Optional[tuple[int, ...]] = None
    discoveries: int = 0


@dataclass
class SimResult:
    scenario: str
    mode: str
    seed: int
    scenario_hash: str
    report: ThroughputReport
    series: list[tuple[float, str, float]]
    counters: dict[str, int]
    handoffs: list[HandoffRecord]
    trace: list[str]
    hops: dict[str, Optional[int]]
    parents: dict[int, Optional[int]]
    last_assignment: Optional[RateAssignment] = None
    invariant_checks: int = 0

    def trace_text(self) -> str:
        return "".join(line + "\n" for line in self.trace)


def build_network(s: Scenario) -> Network:
    ids = [s.hardware_ap.id] + [n.id for n in s.nodes] + [i.id for i in s.interferers]
    att = s.attenuation
    matrix = AttenuationMatrix(ids, default=att.default)
    pl = att.pathloss
    placed = sorted(k for k in att.positions if k in matrix)
    for a, b in combinations(placed, 2):
        loss = log_distance_attenuation(math.dist(att.positions[a], att.positions[b]),
                                        pl.exponent, pl.ref_loss, pl.ref_distance)
        if pl.max_loss is not None and loss > pl.max_loss:
            loss = math.inf
        matrix.set(a, b, loss)
    for a, b, db in att.links:
        if a in matrix and b in matrix:
            matrix.set(a, b, db)
    pr = s.protocol
    hw = s.hardware_ap
    net = Network.create(
        s.network, hw.id, Channel(Band(hw.band), hw.channel), matrix, hw.tx_power, hw.bit_rate,
        prop=PropagationParams(**pr.propagation.model_dump()),
        airtime=AirtimeParams(pr.airtime.overhead_us, pr.airtime.test_frame_bits),
        load_weight=pr.airtime.load_weight_us,
        single_band=s.mode == "single",
        channel_policy=s.benchmark_channels,
        beacon_bits=pr.traffic.control_frame_bits,
        beacon_interval=pr.formation.beacon_interval,
    )
    for n in s.nodes:
        net.add_mesh_node(n.id, n.tx_power, n.bit_rate)
    for i in s.interferers:
        net.interferers[i.id] = Interferer(i.id, Band(i.band), i.utilization, i.channel, i.tx_power)
    for nid in net.nodes:
        net.loads[nid] = LoadTracker(0.0, pr.load.alpha, pr.load.sample_period)
    return net


class Simulator:
    def __init__(self, scenario: Scenario, seed: Optional[int] = None, check_invariants: bool = False):
        self.s = scenario
        self.seed = scenario.sim.seed if seed is None else seed
        self.rng = random.Random(self.seed)  # no protocol step draws from it yet
        self.check_invariants = check_invariants
        self.net = build_network(scenario)
        self.queue = EventQueue()
        self.now = 0.0
        pr = scenario.protocol
        self.form = pr.formation
        self.cfg = HandoffConfig(pr.handoff.T, pr.handoff.theta, pr.handoff.k, pr.handoff.alpha)
        self.eta = pr.engine.eta
        self.tparams = pr.traffic

        self.epoch: dict[int, int] = {}
        self.misses: dict[int, int] = {}
        self.cands: dict[int, list[Candidate]] = {}
        self.pending: dict[int, tuple[HandoffRecord, list[Candidate], str]] = {}
        self.join_queue: deque[int] = deque()
        self.joining: Optional[int] = None
        self.present_from: dict[int, float] = {}
        self.present_until: dict[int, float] = {}

        self.flows: dict[str, FlowState] = {}
        for f in scenario.traffic.flows:
            self.flows[f.id] = FlowState(f.id, f.src, f.dst, f.rate)
        self.providers: dict[int, frozenset] = {}
        for name, nodes in sorted(scenario.services.items()):
            for n in nodes:
                self.providers[n] = self.providers.get(n, frozenset()) | {name}
        self.caches: dict[int, DedupCache] = {}
        self.control: list[tuple[float, tuple[int, Channel], float]] = []  # (until, (node, channel), share)
        self.discovery_seq: dict[int, int] = {}

        self.dirty = False
        self.segments: list[DeliverySegment] = []
        self.drop_segments: list[tuple[float, float, str, float]] = []
        self.series: list[tuple[float, str, float]] = []
        self.handoffs: list[HandoffRecord] = []
        self.counters: dict[str, int] = {}
        self.trace: list[str] = []
        self.assignment: Optional[RateAssignment] = None
        self.invariant_checks = 0
        self.finished = False

    # -- bookkeeping -----------------------------------------------------------------------------

    def count(self, key: str, n: int = 1) -> None:
        self.counters[key] = self.counters.get(key, 0) + n

    def bump(self, node_id: int) -> int:
        self.epoch[node_id] = self.epoch.get(node_id, 0) + 1
        return self.epoch[node_id]

    def scan_time(self) -> float:
        return self.form.scan_duration * sum(len(CHANNELS[b]) for b in self.net.bands())

    def log(self, ev: Event, **note) -> None:
        self.trace.append(ev.line(note))

    # -- setup -----------------------------------------------------------------------------------

    def _schedule_initial(self) -> None:
        q = self.queue
        s = self.s
        q.schedule(s.sim.duration, K.SIM_END)
        self.present_from[self.net.hw_id] = 0.0
        for n in sorted(s.nodes, key=lambda n: (n.start, n.id)):
            q.schedule(n.start, K.DYNAMISM, n.id, action="node_start")
        for f in s.traffic.flows:
            q.schedule(f.start, K.FLOW_START, f.id)
            if f.stop is not None and f.stop < s.sim.duration:
                q.schedule(f.stop, K.FLOW_STOP, f.id)
        for i, d in enumerate(s.dynamism):
            q.schedule(d.time, K.DYNAMISM, None, action=d.kind, index=i)
        q.schedule(s.protocol.load.sample_period, K.METRIC_SAMPLE)

    # -- main loop -------------------------------------------------------------------------------

    def run(self) -> SimResult:
        self._schedule_initial()
        handlers = {
            K.DYNAMISM: self.on_dynamism,
            K.SCAN_COMPLETE: self.on_scan_complete,
            K.ASSOC_COMPLETE: self.on_assoc_complete,
            K.BEACON_TX: self.on_beacon,
            K.HANDOFF_CHECK: self.on_handoff_check,
            K.CONTROL_FRAME: self.on_control,
            K.FLOW_START: self.on_flow_start,
            K.FLOW_STOP: self.on_flow_stop,
            K.METRIC_SAMPLE: self.on_metric_sample,
            K.SIM_END: self.on_end,
        }
        while self.queue and not self.finished:
            ev = self.queue.pop()
            self.now = ev.time
            handlers[ev.kind](ev)
            if self.dirty and not self.finished:
                self.resolve()
            if self.check_invariants:
                problems = self.net.validate()
                self.invariant_checks += 1
                if problems:
                    raise InvariantViolation(f"t={self.now}: " + "; ".join(problems))
        return self.result()

    # -- formation -------------------------------------------------------------------------------

    def request_join(self, node_id: int) -> None:
        if node_id in self.net.departed or node_id in self.join_queue or self.joining == node_id:
            return
        self.join_queue.append(node_id)
        self.pump_joins()

    def pump_joins(self) -> None:
        # joins are serialized so each newcomer sees the APs formed before it
        while self.joining is None and self.join_queue:
            nid = self.join_queue.popleft()
            if nid in self.net.departed or self.net.nodes[nid].assoc is not AssocState.SCANNING:
                continue
            self.joining = nid
            self.queue.schedule(self.now + self.scan_time(), K.SCAN_COMPLETE, nid,
                                epoch=self.bump(nid))

    def release_join(self, node_id: int) -> None:
        if self.joining == node_id:
            self.joining = None
            self.pump_joins()

    def on_scan_complete(self, ev: Event) -> None:
        nid = ev.subject
        if ev.payload["epoch"] != self.epoch.get(nid):
            return
        node = self.net.nodes[nid]
        try:
            chosen = select_ap(scan(self.net, nid), self.net.airtime, self.net.load_weight)
        except NoAPAvailable:
            self.log(ev, heard=0)
            self.count("scan_empty")
            self.release_join(nid)
            self.queue.schedule(self.now + self.form.retry_backoff, K.DYNAMISM, nid, action="rejoin")
            return
        b = chosen.beacon
        node.transition(AssocState.ASSOCIATING, b.ap_id)
        self.log(ev, ap=b.ap_id, channel=str(b.channel))
        self.queue.schedule(self.now + self.form.assoc_delay, K.ASSOC_COMPLETE, nid,
                            epoch=self.epoch[nid], ap=b.ap_id, band=b.channel.band.value,
                            channel=b.channel.index, join=True)

    def on_assoc_complete(self, ev: Event) -> None:
        nid = ev.subject
        if ev.payload["epoch"] != self.epoch.get(nid):
            return
        if ev.payload.get("join"):
            self._finish_join(ev)
        else:
            self._finish_handoff(ev)

    def _finish_join(self, ev: Event) -> None:
        nid = ev.subject
        ch = Channel(Band(ev.payload["band"]), ev.payload["channel"])
        try:
            serving = complete_association(self.net, nid, ev.payload["ap"], ch)
        except TargetVanished:
            self.log(ev, result="vanished")
            self.count("assoc_failed")
            self.release_join(nid)
            self.request_join(nid)
            return
        self.log(ev, result="associated", serving=str(serving))
        self.count("joins")
        self.release_join(nid)
        self._associated(nid)

    def _associated(self, nid: int) -> None:
        """Start the per-association timers and warm the candidate list."""
        e = self.bump(nid)
        self.misses[nid] = 0
        self.cands[nid] = refresh_candidates(self.net, nid, self.now)
        self.queue.schedule(self.now + self.form.beacon_interval, K.BEACON_TX, nid, epoch=e)
        self.queue.schedule(self.now + self.cfg.scan_interval, K.HANDOFF_CHECK, nid, epoch=e)
        self.dirty = True

    # -- handoff ---------------------------------------------------------------------------------

    def on_beacon(self, ev: Event) -> None:
        nid = ev.subject
        if ev.payload["epoch"] != self.epoch.get(nid):
            return
        node = self.net.nodes[nid]
        if node.assoc is not AssocState.ASSOCIATED:
            return
        heard = self.net.observe(node.parent[0], nid, node.upstream.channel) is not None
        self.misses[nid] = 0 if heard else self.misses.get(nid, 0) + 1
        if not heard:
            self.log(ev, missed=self.misses[nid], parent=node.parent[0])
        if self.misses[nid] >= self.cfg.beacon_loss_limit:
            self.count("beacon_loss")
            self.link_lost(nid, "beacon_loss")
            return
        self.queue.schedule(self.now + self.form.beacon_interval, K.BEACON_TX, nid, epoch=ev.payload["epoch"])

    def on_handoff_check(self, ev: Event) -> None:
        nid = ev.subject
        if ev.payload["epoch"] != self.epoch.get(nid):
            return
        node = self.net.nodes[nid]
        if node.assoc is not AssocState.ASSOCIATED:
            return
        self.queue.schedule(self.now + self.cfg.scan_interval, K.HANDOFF_CHECK, nid, epoch=ev.payload["epoch"])
        self.cands[nid] = refresh_candidates(self.net, nid, self.now)
        m = current_metric(self.net, nid)
        if math.isinf(m):
            return  # beacon loss detection owns broken links
        d = decide(self.cands[nid], node.upstream.band, m, self.cfg)
        if isinstance(d, Stay):
            return
        self.log(ev, metric=round(m, 6), decision=type(d).__name__.lower(), target=d.target.ap_id)
        self.begin_handoff(nid, d, "quality")

    def link_lost(self, nid: int, cause: str, extra: Optional[Candidate] = None) -> None:
        """Uplink is gone: move to the best remembered candidate, or orphan."""
        node = self.net.nodes[nid]
        old_parent = node.parent[0] if node.parent else None
        cands = [c for c in expire(self.cands.get(nid, []), self.now, self.cfg.scan_interval)
                 if c.ap_id != old_parent and c.ap_id not in self.net.descendants(nid)]
        if extra is not None:
            cands = rank([c for c in cands if c.ap_id != extra.ap_id] + [extra])
        band = node.upstream.band if node.upstream else (node.parent[1] if node.parent else Band.B24)
        try:
            d = decide(cands, band, math.inf, self.cfg, link_broken=True)
        except Orphaned:
            self.orphan_node(nid, cause)
            return
        self.begin_handoff(nid, d, cause, cands)

    def begin_handoff(self, nid: int, d, cause: str, cands: Optional[list[Candidate]] = None) -> None:
        kind = "soft" if isinstance(d, Soft) else "hard"
        rec = HandoffRecord(nid, kind, d.target.ap_id, self.now, cause=cause)
        remaining = [c for c in (cands if cands is not None else self.cands.get(nid, []))
                     if c is not d.target]
        start_handoff(self.net, nid, d.target)
        self.pending[nid] = (rec, remaining, kind)
        self.trace.append(f"{self.now:.9f} - handoff_start {nid} "
                          f'{{"cause": "{cause}", "kind": "{kind}", "target": {d.target.ap_id}}}')
        self._schedule_reassoc(nid, d.target)
        self.dirty = True

    def _schedule_reassoc(self, nid: int, target: Candidate) -> None:
        delay = self.form.assoc_delay + self.form.channel_switch_delay
        self.queue.schedule(self.now + delay, K.ASSOC_COMPLETE, nid, epoch=self.bump(nid),
                            ap=target.ap_id, band=target.channel.band.value,
                            channel=target.channel.index, join=False)

    def _finish_handoff(self, ev: Event) -> None:
        nid = ev.subject
        rec, remaining, kind = self.pending[nid]
        ch = Channel(Band(ev.payload["band"]), ev.payload["channel"])
        target = Candidate(ev.payload["ap"], ch.band, ch, 0.0, 0.0, self.now)
        try:
            moved, notify = complete_handoff(self.net, nid, target)
        except LookupError:
            self.log(ev, result="refused")
            self.count("handoff_refused")
            if not remaining:
                del self.pending[nid]
                self.orphan_node(nid, "exhausted")
                return
            nxt = remaining.pop(0)
            self.net.nodes[nid].transition(AssocState.REASSOCIATING, nxt.ap_id)
            rec.target = nxt.ap_id
            self._schedule_reassoc(nid, nxt)
            return
        del self.pending[nid]
        rec.completed = self.now
        self.handoffs.append(rec)
        self.count(f"handoff_{kind}")
        self.log(ev, result="associated", kind=kind, moved=moved, notify=notify)
        self._associated(nid)
        for child in notify:
            self.disassociate(nid, child)

    def disassociate(self, parent_id: int, child_id: int) -> None:
        """Parent moved its serving radio; tell the child directly instead of waiting for beacon loss."""
        self.count("control_frames")
        self.count("disassoc")
        parent = self.net.nodes[parent_id]
        self.trace.append(f"{self.now:.9f} - disassoc {child_id} "
                          f'{{"parent": {parent_id}, "serving": "{parent.serving.channel}"}}')
        self.charge_control([(parent_id, parent.serving.channel)], self.form.beacon_interval)
        extra = None
        obs = self.net.observe(parent_id, child_id)
        if obs is not None:
            extra = Candidate(parent_id, obs.band, obs.channel,
                              link_quality(self.net.airtime, obs, self.net.load_weight), obs.rssi, self.now)
        child = self.net.nodes[child_id]
        if child.assoc is not AssocState.ASSOCIATED:
            return
        self.link_lost(child_id, "disassoc", extra)

    def orphan_node(self, nid: int, cause: str) -> None:
        node = self.net.nodes[nid]
        if node.assoc is AssocState.ASSOCIATING:
            node.transition(AssocState.SCANNING)
            children = []
        else:
            children = orphan(self.net, nid)
        self.bump(nid)
        self.handoffs.append(HandoffRecord(nid, "orphan", None, self.now, self.now, cause))
        self.count("orphans")
        self.trace.append(f"{self.now:.9f} - orphan {nid} "
                          f'{{"cause": "{cause}", "children": {children}}}')
        self.dirty = True
        for c in children:
            self.count("control_frames")
            if self.net.nodes[c].assoc is AssocState.ASSOCIATED:
                self.link_lost(c, "disassoc")
        self.request_join(nid)

    # -- dynamism --------------------------------------------------------------------------------

    def on_dynamism(self, ev: Event) -> None:
        action = ev.payload["action"]
        if action == "node_start":
            self.present_from.setdefault(ev.subject, self.now)
            self.log(ev)
            self.request_join(ev.subject)
            return
        if action == "rejoin":
            self.log(ev)
            self.request_join(ev.subject)
            return
        d = self.s.dynamism[ev.payload["index"]]
        self.log(ev)
        self.count("dynamism")
        if isinstance(d, SetAttenuation):
            self.net.matrix.set(d.a, d.b, d.db)
        elif isinstance(d, SetInterferer):
            self.net.interferers[d.id] = replace(self.net.interferers[d.id], utilization=d.utilization)
        elif isinstance(d, RemoveNode):
            self.remove_node(d.node)
        elif isinstance(d, AddNode):
            spec = d.node
            self.net.matrix.add(spec.id, dict(d.links), default=self.s.attenuation.default)
            self.net.add_mesh_node(spec.id, spec.tx_power, spec.bit_rate)
            pr = self.s.protocol.load
            self.net.loads[spec.id] = LoadTracker(0.0, pr.alpha, pr.sample_period)
            self.queue.schedule(max(self.now, spec.start), K.DYNAMISM, spec.id, action="node_start")
        self.dirty = True

    def remove_node(self, nid: int) -> None:
        """The node falls silent. Its children find out through their own beacon checks."""
        if nid not in self.net.nodes or nid in self.net.departed:
            return
        node = self.net.nodes[nid]
        self.net.departed.add(nid)
        self.present_until[nid] = self.now
        self.bump(nid)
        self.pending.pop(nid, None)
        if nid in self.join_queue:
            self.join_queue.remove(nid)
        self.net.detach(nid)
        if node.assoc is not AssocState.SCANNING:
            node.transition(AssocState.SCANNING)
        self.release_join(nid)

    # -- traffic ---------------------------------------------------------------------------------

    def on_flow_start(self, ev: Event) -> None:
        f = self.flows[ev.subject]
        f.active = True
        f.since = self.now
        self.log(ev)
        if isinstance(f.dst, str) and f.dst.startswith("service:"):
            f.needs_discovery = True
        self.dirty = True

    def on_flow_stop(self, ev: Event) -> None:
        f = self.flows[ev.subject]
        self.log(ev)
        self._close(f)
        f.active = False
        f.rate = 0.0
        self.series.append((self.now, f.id, 0.0))
        self.dirty = True

    def _start_discovery(self, f: FlowState) -> None:
        tree = self.net.tree_view()
        seq = self.discovery_seq.get(f.src, 0)
        self.discovery_seq[f.src] = seq + 1
        name = f.dst[len("service:"):]
        bits = self.tparams.control_frame_bits

        def hop_delay(a: int, b: int) -> float:
            fer = self.net.link_fer(a, b)
            if fer >= 1.0:
                return math.inf
            return bits / (self.net.nodes[a].radios[0].bit_rate * (1.0 - fer))

        for nid in self.net.nodes:
            self.caches.setdefault(nid, DedupCache(self.tparams.dedup_capacity))
        res = discover_service(tree, f.src, name, self.providers, seq, hop_delay,
                               self.tparams.reply_window, self.caches, self.now)
        f.discoveries += 1
        f.needs_discovery = False
        f.discovery_pending = True
        self.count("discoveries")
        self.count("discovery_forwards", res.forwards)
        self.count("control_frames", res.forwards + res.reply_hops)
        frames = []
        for n in res.forwarders:
            node = self.net.nodes[n]
            if tree.children.get(n) and node.serving is not None:
                frames.append((n, node.serving.channel))
            if node.parent is not None and node.upstream is not None:
                frames.append((n, node.upstream.channel))
        frames += [(a, self._hop_channel(a, b)) for a, b in res.reply_links]
        self.charge_control(frames, self.tparams.reply_window)
        try:
            best = res.best()
            payload = {"provider": best.provider, "route": list(best.route)}
        except ServiceNotFound:
            payload = {"provider": None, "route": None}
        self.queue.schedule(self.now + self.tparams.reply_window, K.CONTROL_FRAME, f.id,
                            action="service_select", replies=len(res.replies), **payload)

    def charge_control(self, frames: list[tuple[int, Channel]], window: float) -> None:
        """Spread the airtime of a burst of control frames over ``window`` seconds."""
        bits = self.tparams.control_frame_bits
        for n, ch in frames:
            radio = next((r for r in self.net.nodes[n].radios if r.channel == ch), self.net.nodes[n].radios[0])
            self.control.append((self.now + window, (n, ch), bits / radio.bit_rate / window))
        if frames:
            self.queue.schedule(self.now + window, K.CONTROL_FRAME, None, action="control_expire")
            self.dirty = True

    def control_utilization(self) -> dict[tuple[int, Channel], float]:
        self.control = [c for c in self.control if c[0] > self.now]
        out: dict[tuple[int, Channel], float] = {}
        for _, key, share in self.control:
            out[key] = out.get(key, 0.0) + share
        return out

    def on_control(self, ev: Event) -> None:
        if ev.payload["action"] == "control_expire":
            self.dirty = True
            return
        f = self.flows[ev.subject]
        self.log(ev)
        f.discovery_pending = False
        if not f.active:
            return
        if ev.payload["route"] is None:
            self.count("service_not_found")
            f.service_route = None
            f.needs_discovery = True  # try again at the next topology change
        else:
            f.service_route = tuple(ev.payload["route"])
        self.dirty = True

    def _route(self, f: FlowState, tree) -> tuple[Optional[list[int]], Optional[int]]:
        if f.src in self.net.departed or self.net.nodes[f.src].assoc is AssocState.SCANNING \
                and f.src != self.net.hw_id:
            return None, None
        if f.dst == INTERNET:
            path = uplink_path(tree, f.src)
            return path, (self.net.hw_id if path else None)
        if isinstance(f.dst, int):
            if f.dst in self.net.departed:
                return None, None
            if f.route is not None and f.route[0] == f.src and f.route[-1] == f.dst \
                    and route_intact(tree, f.route) and all(tree.connected(n) for n in f.route):
                return f.route, f.dst
            if not (tree.connected(f.src) and tree.connected(f.dst)):
                return None, None
            tables = {nid: n.mac_table for nid, n in self.net.nodes.items()}
            d = deliver_frame(tree, tables, f.src, f.dst, self.now)
            self.count("downlink_frames")
            self.count("floods" if d.duplicates or d.retried else "unicasts")
            return (d.path, f.dst) if d.delivered else (None, None)
        # service flow
        route = f.service_route
        if route is not None and route_intact(tree, route) and route[-1] not in self.net.departed:
            return list(route), route[-1]
        if route is not None:
            f.service_route = None
            f.needs_discovery = True
        return None, None

    def _hop_channel(self, a: int, b: int) -> Channel:
        na, nb = self.net.nodes[a], self.net.nodes[b]
        if na.parent and na.parent[0] == b:
            return na.upstream.channel
        return nb.upstream.channel

    def _links(self, path: list[int]) -> list[Link]:
        links = []
        for a, b in zip(path, path[1:]):
            na = self.net.nodes[a]
            ch = self._hop_channel(a, b)
            radio = next((r for r in na.radios if r.channel == ch), na.radios[0])
            fer = self.net.link_fer(a, b)
            cap = 0.0 if fer >= 1.0 else self.eta * radio.bit_rate * (1.0 - fer)
            links.append(Link(a, b, ch, cap))
        return links

    def _close(self, f: FlowState) -> None:
        if f.active and self.now > f.since:
            if f.rate > 0 and f.receiver is not None:
                self.segments.append(DeliverySegment(f.since, self.now, f.id, f.receiver, f.rate))
            if f.rate < f.offered:
                self.drop_segments.append((f.since, self.now, f.id, f.offered - f.rate))
        f.since = self.now

    def resolve(self) -> None:
        """Re-route every active flow and re-solve rates."""
        self.dirty = False
        tree = self.net.tree_view()
        settling = any(n.assoc in (AssocState.ASSOCIATING, AssocState.REASSOCIATING)
                       for n in self.net.nodes.values())
        demands = []
        routes: dict[str, tuple] = {}
        for f in self.flows.values():
            if not f.active:
                continue
            path, receiver = self._route(f, tree)
            if f.needs_discovery and not f.discovery_pending and not settling \
                    and tree.connected(f.src) and f.src not in self.net.departed:
                self._start_discovery(f)
            routes[f.id] = (path, receiver)
            if path and len(path) > 1:
                demands.append(FlowDemand(f.id, self._links(path), f.offered))
        problem = RateProblem(demands, self.net.matrix,
                              {i: self.net.tx_power(i) for i in self.net.matrix.ids if
                               i in self.net.nodes or i in self.net.interferers},
                              list(self.net.interferers.values()), self.net.prop,
                              self.control_utilization())
        self.assignment = solve_problem(problem)
        for f in self.flows.values():
            if not f.active:
                continue
            path, receiver = routes[f.id]
            rate = self.assignment.rates.get(f.id, 0.0)
            if path != f.route or rate != f.rate or receiver != f.receiver:
                self._close(f)
                if rate != f.rate:
                    self.series.append((self.now, f.id, rate))
                f.route, f.receiver, f.rate = path, receiver, rate
        self.trace.append(f"{self.now:.9f} - rates "
                          + "{" + ", ".join(f'"{k}": {v!r}' for k, v in
                                            sorted(self.assignment.rates.items())) + "}")

    # -- load sampling and end -------------------------------------------------------------------

    def on_metric_sample(self, ev: Event) -> None:
        busy: dict[int, float] = {}
        a = self.assignment
        if a is not None:
            for f in self.flows.values():
                if not f.active or not f.route or f.rate <= 0:
                    continue
                for link in self._links(f.route):
                    if link.capacity <= 0:
                        continue
                    for ap in (link.tx, link.rx):
                        sv = self.net.nodes[ap].serving
                        if sv is not None and sv.channel == link.channel:
                            busy[ap] = busy.get(ap, 0.0) + f.rate / link.capacity
        for nid in sorted(self.net.nodes):
            if self.net.beaconing(nid):
                self.net.loads[nid] = update_load(self.net.loads[nid], min(busy.get(nid, 0.0), 1.0))
        nxt = self.now + self.s.protocol.load.sample_period
        if nxt < self.s.sim.duration:
            self.queue.schedule(nxt, K.METRIC_SAMPLE)

    def on_end(self, ev: Event) -> None:
        for f in self.flows.values():
            self._close(f)
        self.log(ev)
        self.finished = True

    def result(self) -> SimResult:
        window = self.s.sim.measurement_window()
        a, b = window
        present = [n for n in sorted(self.net.nodes)
                   if self.present_from.get(n, math.inf) < b and self.present_until.get(n, math.inf) > a]
        drops: dict[str, float] = {}
        for t0, t1, fid, rate in self.drop_segments:
            lo, hi = max(t0, a), min(t1, b)
            if hi > lo:
                drops[fid] = drops.get(fid, 0.0) + rate * (hi - lo)
        report = throughput(self.segments, window, present or [self.net.hw_id], drops)
        for fid in self.flows:
            report.flow_rates.setdefault(fid, 0.0)
        report.flow_rates = dict(sorted(report.flow_rates.items()))
        hops = {fid: (len(f.route) - 1 if f.route else None) for fid, f in self.flows.items()}
        tree = self.net.tree_view()
        return SimResult(self.s.name, self.s.mode, self.seed, scenario_hash(self.s), report,
                         self.series, dict(sorted(self.counters.items())), self.handoffs, self.trace,
                         hops, dict(sorted(tree.parent.items())), self.assignment, self.invariant_checks)


def run(scenario: Scenario, seed: Optional[int] = None, check_invariants: bool = False) -> SimResult:
    return Simulator(scenario, seed, check_invariants).run()
