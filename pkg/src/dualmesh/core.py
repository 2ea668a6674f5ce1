"""Shared vocabulary: bands, channels, radios, nodes and the association lifecycle."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Optional


class Band(enum.Enum):
    B24 = "2.4"
    B58 = "5.8"

    def __lt__(self, other: "Band") -> bool:
        return self.value < other.value

    def __str__(self) -> str:
        return self.value


def other_band(band: Band) -> Band:
    return Band.B58 if band is Band.B24 else Band.B24


CHANNELS = {
    Band.B24: (1, 6, 11),
    Band.B58: (36, 40, 44, 48, 149, 153, 157, 161),
}


@dataclass(frozen=True, order=True)
class Channel:
    band: Band
    index: int

    def __post_init__(self):
        if self.index not in CHANNELS[self.band]:
            raise ValueError(f"channel {self.index} is not a {self.band} GHz channel")

    def __str__(self) -> str:
        return f"{self.band}/{self.index}"


class RadioRole(enum.Enum):
    UPSTREAM = "upstream"
    SERVING = "serving"
    IDLE = "idle"


@dataclass
class Radio:
    band: Band
    role: RadioRole = RadioRole.IDLE
    channel: Optional[Channel] = None
    tx_power: float = 20.0
    bit_rate: float = 11e6

    def activate(self, role: RadioRole, channel: Channel) -> None:
        if role is RadioRole.IDLE:
            raise ValueError("use deactivate() to idle a radio")
        if channel.band is not self.band:
            raise ValueError(f"{self.band} GHz radio cannot tune to {channel}")
        self.role = role
        self.channel = channel

    def deactivate(self) -> None:
        self.role = RadioRole.IDLE
        self.channel = None


class NodeKind(enum.Enum):
    HARDWARE_AP = "hardware_ap"
    MESH = "mesh"


class AssocState(enum.Enum):
    SCANNING = "scanning"
    ASSOCIATING = "associating"
    ASSOCIATED = "associated"
    REASSOCIATING = "reassociating"


# (from, to) pairs. Reassociating->Reassociating is a retry against the next
# candidate; *->Scanning covers vanished targets and exhausted candidate lists.
LEGAL_TRANSITIONS = {
    (AssocState.SCANNING, AssocState.ASSOCIATING),
    (AssocState.ASSOCIATING, AssocState.ASSOCIATED),
    (AssocState.ASSOCIATING, AssocState.SCANNING),
    (AssocState.ASSOCIATED, AssocState.REASSOCIATING),
    (AssocState.REASSOCIATING, AssocState.REASSOCIATING),
    (AssocState.REASSOCIATING, AssocState.ASSOCIATED),
    (AssocState.REASSOCIATING, AssocState.SCANNING),
    (AssocState.ASSOCIATED, AssocState.SCANNING),
}


class IllegalTransition(RuntimeError):
    pass


@dataclass
class Node:
    id: int
    radios: tuple[Radio, Radio]
    kind: NodeKind = NodeKind.MESH
    assoc: AssocState = AssocState.SCANNING
    target: Optional[int] = None
    parent: Optional[tuple[int, Band]] = None
    children: set[int] = field(default_factory=set)
    mac_table: dict[int, tuple[int, float]] = field(default_factory=dict)  # dest -> (child, learned_at)

    @property
    def is_hardware(self) -> bool:
        return self.kind is NodeKind.HARDWARE_AP

    def radio(self, role: RadioRole) -> Optional[Radio]:
        for r in self.radios:
            if r.role is role:
                return r
        return None

    @property
    def upstream(self) -> Optional[Radio]:
        return self.radio(RadioRole.UPSTREAM)

    @property
    def serving(self) -> Optional[Radio]:
        return self.radio(RadioRole.SERVING)

    def idle_radio(self, band: Optional[Band] = None) -> Optional[Radio]:
        for r in self.radios:
            if r.role is RadioRole.IDLE and (band is None or r.band is band):
                return r
        return None

    def radio_for(self, band: Band, exclude: Optional[Radio] = None) -> Radio:
        """First radio able to tune to ``band``, skipping ``exclude``."""
        for r in self.radios:
            if r.band is band and r is not exclude:
                return r
        raise ValueError(f"node {self.id} has no spare {band} GHz radio")

    def transition(self, new: AssocState, target: Optional[int] = None) -> None:
        if (self.assoc, new) not in LEGAL_TRANSITIONS:
            raise IllegalTransition(f"node {self.id}: {self.assoc.value} -> {new.value}")
        self.assoc = new
        self.target = target if new in (AssocState.ASSOCIATING, AssocState.REASSOCIATING) else None


def make_hardware_ap(node_id: int, channel: Channel, tx_power: float = 20.0,
                     bit_rate: float = 11e6) -> Node:
    active = Radio(channel.band, tx_power=tx_power, bit_rate=bit_rate)
    active.activate(RadioRole.SERVING, channel)
    spare = Radio(other_band(channel.band), tx_power=tx_power, bit_rate=bit_rate)
    node = Node(node_id, (active, spare), kind=NodeKind.HARDWARE_AP)
    node.assoc = AssocState.ASSOCIATED
    return node


def make_mesh_node(node_id: int, single_band: bool = False, tx_power: float = 20.0,
                   bit_rate: float = 11e6) -> Node:
    bands = (Band.B24, Band.B24) if single_band else (Band.B24, Band.B58)
    radios = tuple(Radio(b, tx_power=tx_power, bit_rate=bit_rate) for b in bands)
    return Node(node_id, radios)  # type: ignore[arg-type]


def _check_radios(node: Node) -> list[str]:
    out = []
    for r in node.radios:
        if (r.channel is None) != (r.role is RadioRole.IDLE):
            out.append(f"node {node.id}: {r.band} radio role {r.role.value} with channel {r.channel}")
        if r.channel is not None and r.channel.band is not r.band:
            out.append(f"node {node.id}: {r.band} radio tuned to {r.channel}")
    return out


def validate_tree(nodes: Iterable[Node], dual_band: Optional[bool] = None) -> list[str]:
    """Return a list of human-readable invariant violations; empty means healthy.

    Nodes that are mid-(re)association have no parent, so the subtrees below
    them are detached for a moment; that is not reported. Cycles, dangling
    parent/child links and band-alternation failures are.
    """
    by_id = {n.id: n for n in nodes}
    problems: list[str] = []
    roots = [n for n in by_id.values() if n.is_hardware]
    if len(roots) != 1:
        problems.append(f"expected exactly one hardware AP, found {len(roots)}")
    if dual_band is None:
        dual_band = any(len({r.band for r in n.radios}) == 2
                        for n in by_id.values() if not n.is_hardware)

    for node in sorted(by_id.values(), key=lambda n: n.id):
        problems.extend(_check_radios(node))
        if node.is_hardware:
            if node.parent is not None:
                problems.append(f"hardware AP {node.id} has a parent")
            active = [r for r in node.radios if r.role is not RadioRole.IDLE]
            if len(active) != 1:
                problems.append(f"hardware AP {node.id} has {len(active)} active radios")
        else:
            if node.assoc is AssocState.ASSOCIATED:
                if node.parent is None:
                    problems.append(f"node {node.id} associated without a parent")
            elif node.parent is not None:
                problems.append(f"node {node.id} is {node.assoc.value} but still has parent {node.parent[0]}")
        for child in sorted(node.children):
            c = by_id.get(child)
            if c is None:
                problems.append(f"node {node.id} lists unknown child {child}")
            elif c.parent is None or c.parent[0] != node.id:
                problems.append(f"node {node.id} lists child {child} whose parent is {c.parent and c.parent[0]}")
        if node.parent is None:
            continue
        pid, pband = node.parent
        p = by_id.get(pid)
        if p is None:
            problems.append(f"node {node.id} has unknown parent {pid}")
            continue
        if node.id not in p.children:
            problems.append(f"node {node.id} missing from children of {pid}")
        up, ps = node.upstream, p.serving
        if up is None:
            problems.append(f"node {node.id} has a parent but no upstream radio")
        elif ps is None or ps.channel != up.channel or pband is not up.band:
            problems.append(f"node {node.id} upstream {up.channel} does not match parent {pid} serving "
                            f"{ps.channel if ps else None}")
        sv = node.serving
        if dual_band and up is not None and sv is not None and sv.band is up.band:
            problems.append(f"node {node.id} serves and uplinks on the same band {up.band}")

    # cycle detection: follow parent pointers, remembering chains already proven finite
    settled: set[int] = set()
    for node in by_id.values():
        chain: list[int] = []
        on_chain: set[int] = set()
        cur: Optional[Node] = node
        while cur is not None and cur.id not in settled:
            if cur.id in on_chain:
                problems.append(f"cycle through node {cur.id}")
                break
            chain.append(cur.id)
            on_chain.add(cur.id)
            cur = by_id.get(cur.parent[0]) if cur.parent is not None else None
        settled.update(chain)
    return problems
