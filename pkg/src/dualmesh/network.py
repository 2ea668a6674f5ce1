"""Mutable world state shared by formation, handoff and the engine."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Optional

from .core import (AssocState, Band, Channel, Node, RadioRole, make_hardware_ap,
                   make_mesh_node, validate_tree)
from .metric import AirtimeParams, LinkObservation, LoadTracker
from .radio import (AttenuationMatrix, Interferer, PropagationParams, frame_error_rate,
                    reachable, rssi)

SHARED = "shared"
ASSIGNED = "assigned"


@dataclass
class TreeView:
    """Parent/children snapshot used by the traffic plane."""

    root: int
    parent: dict[int, Optional[int]]
    children: dict[int, list[int]]

    def neighbors(self, node: int) -> list[int]:
        out = list(self.children.get(node, ()))
        p = self.parent.get(node)
        if p is not None:
            out.insert(0, p)
        return out

    def ancestors(self, node: int) -> list[int]:
        out = []
        cur = self.parent.get(node)
        while cur is not None:
            out.append(cur)
            cur = self.parent.get(cur)
        return out

    def connected(self, node: int) -> bool:
        return node == self.root or (self.ancestors(node) or [None])[-1] == self.root

    def path(self, a: int, b: int) -> Optional[list[int]]:
        """Unique tree path from a to b, or None if they are in different trees."""
        up_a = [a] + self.ancestors(a)
        up_b = [b] + self.ancestors(b)
        on_b = set(up_b)
        for i, n in enumerate(up_a):
            if n in on_b:
                j = up_b.index(n)
                return up_a[: i + 1] + list(reversed(up_b[:j]))
        return None


@dataclass
class Network:
    name: str
    hw_id: int
    matrix: AttenuationMatrix
    prop: PropagationParams = field(default_factory=PropagationParams)
    airtime: AirtimeParams = field(default_factory=AirtimeParams)
    load_weight: Optional[float] = None
    single_band: bool = False
    channel_policy: str = SHARED
    nodes: dict[int, Node] = field(default_factory=dict)
    interferers: dict[int, Interferer] = field(default_factory=dict)
    loads: dict[int, LoadTracker] = field(default_factory=dict)
    beacon_bits: float = 2048.0
    beacon_interval: float = 0.1
    departed: set[int] = field(default_factory=set)  # removed nodes stay listed but fall silent

    @classmethod
    def create(cls, name: str, hw_id: int, hw_channel: Channel, matrix: AttenuationMatrix,
               hw_tx_power: float = 20.0, hw_bit_rate: float = 11e6, **kw) -> "Network":
        net = cls(name, hw_id, matrix, **kw)
        net.nodes[hw_id] = make_hardware_ap(hw_id, hw_channel, hw_tx_power, hw_bit_rate)
        net.loads[hw_id] = LoadTracker()
        return net

    def add_mesh_node(self, node_id: int, tx_power: float = 20.0, bit_rate: float = 11e6) -> Node:
        if node_id in self.nodes:
            raise ValueError(f"node {node_id} already exists")
        node = make_mesh_node(node_id, self.single_band, tx_power, bit_rate)
        self.nodes[node_id] = node
        self.loads[node_id] = LoadTracker()
        return node

    @property
    def hw(self) -> Node:
        return self.nodes[self.hw_id]

    def bands(self) -> tuple[Band, ...]:
        return (Band.B24,) if self.single_band else (Band.B24, Band.B58)

    def tx_power(self, node_id: int) -> float:
        if node_id in self.interferers:
            return self.interferers[node_id].tx_power
        return self.nodes[node_id].radios[0].tx_power

    def rx_power(self, tx: int, rx: int) -> float:
        return rssi(self.tx_power(tx), self.matrix.get(tx, rx))

    def beaconing(self, ap_id: int) -> bool:
        ap = self.nodes.get(ap_id)
        if ap is None or ap.serving is None or ap_id in self.departed:
            return False
        return ap.is_hardware or ap.assoc in (AssocState.ASSOCIATED, AssocState.REASSOCIATING)

    def observe(self, ap_id: int, rx_id: int, channel: Optional[Channel] = None) -> Optional[LinkObservation]:
        """What ``rx_id`` measures for ``ap_id``'s serving radio, or None if unheard.

        ``channel`` pins the measurement to a specific (band, channel), which is
        how an associated child checks that its parent still serves there.
        """
        if ap_id == rx_id or not self.beaconing(ap_id) or rx_id not in self.nodes \
                or rx_id in self.departed:
            return None
        serving = self.nodes[ap_id].serving
        if channel is not None and serving.channel != channel:
            return None
        level = self.rx_power(ap_id, rx_id)
        if not reachable(level, self.prop):
            return None
        fer = frame_error_rate(level, self.prop)
        if fer >= 1.0:
            return None
        return LinkObservation(ap_id, serving.band, serving.channel, level, fer, serving.bit_rate,
                               self.loads[ap_id].utilization)

    def beacon_share(self, bit_rate: float) -> float:
        """Fraction of a channel's airtime one AP spends beaconing."""
        return min(1.0, self.beacon_bits / bit_rate / self.beacon_interval)

    def link_fer(self, a: int, b: int) -> float:
        if a in self.departed or b in self.departed:
            return 1.0
        level = self.rx_power(a, b)
        return 1.0 if math.isinf(level) else frame_error_rate(level, self.prop)

    def descendants(self, node_id: int) -> set[int]:
        out: set[int] = set()
        stack = list(self.nodes[node_id].children)
        while stack:
            n = stack.pop()
            if n in out:
                continue
            out.add(n)
            stack.extend(self.nodes[n].children)
        return out

    def attach(self, child_id: int, parent_id: int) -> None:
        child, parent = self.nodes[child_id], self.nodes[parent_id]
        if child.parent is not None:
            raise RuntimeError(f"node {child_id} already has parent {child.parent[0]}")
        child.parent = (parent_id, parent.serving.band)
        parent.children.add(child_id)

    def detach(self, child_id: int) -> Optional[int]:
        child = self.nodes[child_id]
        if child.parent is None:
            return None
        pid = child.parent[0]
        child.parent = None
        parent = self.nodes.get(pid)
        if parent is not None:
            parent.children.discard(child_id)
            purge_child(parent, child_id)
        return pid

    def tree_view(self) -> TreeView:
        parent = {nid: (n.parent[0] if n.parent else None) for nid, n in self.nodes.items()}
        children = {nid: sorted(n.children) for nid, n in self.nodes.items()}
        return TreeView(self.hw_id, parent, children)

    def serving_nodes(self) -> Iterator[Node]:
        for nid in sorted(self.nodes):
            if self.beaconing(nid):
                yield self.nodes[nid]

    def validate(self) -> list[str]:
        return validate_tree(self.nodes.values(), dual_band=not self.single_band)


def purge_child(node: Node, child_id: int) -> None:
    for dest in [d for d, (via, _) in node.mac_table.items() if via == child_id]:
        del node.mac_table[dest]


def radio_role_channel(node: Node, role: RadioRole) -> Optional[Channel]:
    r = node.radio(role)
    return r.channel if r else None
