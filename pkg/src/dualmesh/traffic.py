"""Relaying, the learning-switch downlink, and flooded service discovery.

Everything here works on a :class:`~dualmesh.network.TreeView` snapshot plus
per-node MAC tables, so it can be driven frame by frame in tests or called
from the engine whenever a flow needs a path.
"""

from __future__ import annotations

import enum
import heapq
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Union

from .network import TreeView

INTERNET = "internet"


class FrameKind(enum.Enum):
    DATA = "data"
    ACK = "ack"
    SERVICE_REQUEST = "service_request"
    SERVICE_REPLY = "service_reply"
    DISASSOC = "disassoc"


@dataclass(frozen=True)
class Service:
    name: str


Destination = Union[int, str, Service]


@dataclass
class Frame:
    kind: FrameKind
    src: int
    dst: Destination
    payload_bits: int = 0
    dedup_id: Optional[tuple[int, int]] = None
    route: Optional[list[int]] = None


class ServiceNotFound(LookupError):
    pass


MacTable = dict  # dest -> (child, learned_at)


def learn(table: MacTable, dest: int, via_child: int, now: float, children) -> bool:
    """Record ``dest`` behind ``via_child``. Acks from non-children are ignored."""
    if via_child not in children:
        return False
    table[dest] = (via_child, now)
    return True


@dataclass
class UplinkStep:
    action: str  # "forward", "deliver" or "drop"
    next_hop: Optional[int] = None


def forward_uplink(tree: TreeView, node: int, frame: Frame) -> UplinkStep:
    if node == tree.root:
        return UplinkStep("deliver")
    parent = tree.parent.get(node)
    if parent is None:
        return UplinkStep("drop")
    return UplinkStep("forward", parent)


def uplink_path(tree: TreeView, src: int) -> Optional[list[int]]:
    """Hop list from ``src`` to the hardware AP, or None when the chain is cut."""
    path = [src]
    frame = Frame(FrameKind.DATA, src, INTERNET)
    while True:
        step = forward_uplink(tree, path[-1], frame)
        if step.action == "deliver":
            return path
        if step.action == "drop" or step.next_hop in path:
            return None
        path.append(step.next_hop)


@dataclass
class DownlinkResult:
    delivered: bool
    receivers: list[int] = field(default_factory=list)  # every node that got a copy
    transmissions: int = 0  # node-level sends; a flood is one broadcast
    path: Optional[list[int]] = None  # hops actually used to reach dst

    @property
    def duplicates(self) -> int:
        if self.path is None:
            return len(self.receivers)
        return len([r for r in self.receivers if r not in self.path])


def forward_downlink(tree: TreeView, tables: Mapping[int, MacTable], node: int, frame: Frame,
                     ingress: Optional[int] = None) -> DownlinkResult:
    """Switch ``frame`` onward from ``node``; it arrived from ``ingress`` (None if it starts here).

    A table hit sends one unicast to the learned child. A miss floods every
    tree neighbour except the one the frame came from: one broadcast on the
    serving radio for the children, one send on the upstream radio for the
    parent.
    """
    result = DownlinkResult(False)
    came_from: dict[int, Optional[int]] = {node: ingress}
    stack = [node]
    while stack:
        cur = stack.pop()
        if cur == frame.dst:
            result.delivered = True
            continue
        back = came_from[cur]
        kids = [c for c in tree.children.get(cur, ()) if c != back]
        hit = tables.get(cur, {}).get(frame.dst)
        if hit is not None and hit[0] in kids:
            nxt = [hit[0]]
            result.transmissions += 1
        else:
            nxt = list(kids)
            result.transmissions += 1 if kids else 0
            up = tree.parent.get(cur)
            if up is not None and up != back:
                nxt.append(up)
                result.transmissions += 1
        for c in reversed(nxt):
            if c in came_from:
                continue
            came_from[c] = cur
            result.receivers.append(c)
            stack.append(c)
    if result.delivered:
        hops = [frame.dst]
        while hops[-1] != node:
            hops.append(came_from[hops[-1]])
        result.path = list(reversed(hops))
    return result


@dataclass
class Delivery:
    delivered: bool
    path: Optional[list[int]]
    transmissions: int
    duplicates: int
    acks: int = 0
    retried: bool = False


def deliver_frame(tree: TreeView, tables: dict[int, MacTable], src: int, dst: int, now: float) -> Delivery:
    """One data frame from ``src`` to ``dst`` through the switch, then its ack.

    If the frame dies in a stale branch, every node that handled it purges its
    entry for ``dst`` and the frame is sent once more, which floods afresh.
    """
    frame = Frame(FrameKind.DATA, src, dst)
    res = forward_downlink(tree, tables, src, frame)
    tx, dups, retried = res.transmissions, res.duplicates, False
    if not res.delivered:
        stale = [n for n in [src] + res.receivers if dst in tables.get(n, {})]
        for n in stale:
            del tables[n][dst]
        if stale:
            retried = True
            res = forward_downlink(tree, tables, src, frame)
            tx, dups = tx + res.transmissions, dups + res.duplicates
    if not res.delivered:
        return Delivery(False, None, tx, dups, retried=retried)
    acks = ack_learn(tree, tables, res.path, now)
    return Delivery(True, res.path, tx, dups, acks, retried)


def ack_learn(tree: TreeView, tables: dict[int, MacTable], path: list[int], now: float) -> int:
    """Send the ack back along ``path``; nodes hearing it from a child learn dst."""
    dst = path[-1]
    back = list(reversed(path))
    for prev, node in zip(back, back[1:]):
        if tree.parent.get(prev) == node:
            learn(tables.setdefault(node, {}), dst, prev, now, tree.children.get(node, ()))
    return len(back) - 1


class DedupCache:
    """Remembers the last ``capacity`` request ids, least recently seen evicted first."""

    def __init__(self, capacity: int = 1024):
        self.capacity = capacity
        self._seen: OrderedDict = OrderedDict()

    def seen(self, key) -> bool:
        """True if ``key`` was already recorded; records it otherwise."""
        if key in self._seen:
            self._seen.move_to_end(key)
            return True
        self._seen[key] = None
        if len(self._seen) > self.capacity:
            self._seen.popitem(last=False)
        return False


@dataclass(frozen=True)
class Reply:
    provider: int
    route: tuple[int, ...]  # requester ... provider
    arrival: float

    @property
    def hops(self) -> int:
        return len(self.route) - 1


@dataclass
class DiscoveryResult:
    forwards: int
    replies: list[Reply]
    reply_hops: int = 0
    forwarders: list[int] = field(default_factory=list)  # nodes that broadcast the request, in order
    reply_links: list[tuple[int, int]] = field(default_factory=list)  # (tx, rx) per reply hop

    def best(self) -> Reply:
        if not self.replies:
            raise ServiceNotFound("no provider replied")
        return min(self.replies, key=lambda r: (r.hops, r.arrival, r.provider))


HopDelay = Callable[[int, int], float]


def discover_service(tree: TreeView, requester: int, service: str,
                     providers: Mapping[int, frozenset], seq: int = 0,
                     hop_delay: Optional[HopDelay] = None, reply_window: float = 0.5,
                     caches: Optional[dict[int, DedupCache]] = None,
                     start: float = 0.0) -> DiscoveryResult:
    """Flood a request over tree links and gather replies that arrive in the window.

    Each node rebroadcasts a given (requester, seq) at most once. Providers
    answer instead of forwarding; their reply walks the recorded path back.
    """
    delay = hop_delay or (lambda a, b: 1e-3)
    caches = caches if caches is not None else {}
    req_id = (requester, seq)
    forwards = 0
    replies: list[Reply] = []
    reply_hops = 0
    forwarders: list[int] = []
    reply_links: list[tuple[int, int]] = []
    # (time, tiebreak, node, path so far)
    queue: list = [(start, 0, requester, (requester,))]
    counter = 1
    while queue:
        t, _, node, path = heapq.heappop(queue)
        if caches.setdefault(node, DedupCache()).seen(req_id):
            continue
        if node != requester and service in providers.get(node, ()):
            back = t
            for a, b in zip(reversed(path), list(reversed(path))[1:]):
                back += delay(a, b)
                reply_links.append((a, b))
            reply_hops += len(path) - 1
            if back - start <= reply_window:
                replies.append(Reply(node, path, back - start))
            continue
        forwards += 1
        forwarders.append(node)
        for nb in tree.neighbors(node):
            if nb in path:
                continue
            heapq.heappush(queue, (t + delay(node, nb), counter, nb, path + (nb,)))
            counter += 1
    return DiscoveryResult(forwards, replies, reply_hops, forwarders, reply_links)


def route_intact(tree: TreeView, route) -> bool:
    """Every consecutive pair on ``route`` is still a parent/child link."""
    for a, b in zip(route, route[1:]):
        if tree.parent.get(a) != b and tree.parent.get(b) != a:
            return False
    return True
