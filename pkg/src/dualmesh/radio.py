"""Received power, frame loss, reachability and contention structure."""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .core import Band, Channel

NO_SIGNAL = -math.inf


@dataclass(frozen=True)
class PropagationParams:
    rx_sensitivity: float = -82.0
    cs_threshold: float = -82.0
    fer_clear: float = -70.0
    fer_floor: float = -90.0

    def __post_init__(self):
        if not self.fer_floor < self.fer_clear:
            raise ValueError("fer_floor must be below fer_clear")
        if not self.rx_sensitivity <= self.cs_threshold <= self.fer_clear:
            raise ValueError("need rx_sensitivity <= cs_threshold <= fer_clear")


class AttenuationMatrix:
    """Symmetric dB matrix over node and interferer ids; ``inf`` means no path."""

    def __init__(self, ids: Sequence[int], default: float = math.inf):
        self.ids = list(ids)
        self.index = {k: i for i, k in enumerate(self.ids)}
        if len(self.index) != len(self.ids):
            raise ValueError("duplicate ids in attenuation matrix")
        n = len(self.ids)
        self.values = np.full((n, n), float(default))
        np.fill_diagonal(self.values, 0.0)

    def __contains__(self, node_id: int) -> bool:
        return node_id in self.index

    def get(self, a: int, b: int) -> float:
        return float(self.values[self.index[a], self.index[b]])

    def set(self, a: int, b: int, db: float) -> None:
        if a == b:
            raise ValueError("diagonal entries are fixed at 0 dB")
        if db < 0:
            raise ValueError(f"negative attenuation {db} dB between {a} and {b}")
        i, j = self.index[a], self.index[b]
        self.values[i, j] = self.values[j, i] = float(db)

    def add(self, node_id: int, links: Mapping[int, float], default: float = math.inf) -> None:
        if node_id in self.index:
            raise ValueError(f"id {node_id} already present")
        n = len(self.ids)
        grown = np.full((n + 1, n + 1), float(default))
        grown[:n, :n] = self.values
        grown[n, n] = 0.0
        self.values = grown
        self.ids.append(node_id)
        self.index[node_id] = n
        for other, db in links.items():
            self.set(node_id, other, db)

    def copy(self) -> "AttenuationMatrix":
        out = AttenuationMatrix(self.ids)
        out.values = self.values.copy()
        return out


def log_distance_attenuation(distance: float, exponent: float = 3.0, ref_loss: float = 40.0,
                             ref_distance: float = 1.0) -> float:
    """Path loss PL0 + 10 n log10(d / d0); distances below d0 are clamped to d0."""
    d = max(distance, ref_distance)
    return ref_loss + 10.0 * exponent * math.log10(d / ref_distance)


def matrix_from_positions(positions: Mapping[int, Sequence[float]], exponent: float = 3.0,
                          ref_loss: float = 40.0, ref_distance: float = 1.0,
                          max_loss: Optional[float] = None) -> AttenuationMatrix:
    ids = sorted(positions)
    m = AttenuationMatrix(ids)
    for a, b in combinations(ids, 2):
        d = math.dist(positions[a], positions[b])
        loss = log_distance_attenuation(d, exponent, ref_loss, ref_distance)
        m.set(a, b, math.inf if max_loss is not None and loss > max_loss else loss)
    return m


def rssi(tx_power: float, attenuation: float) -> float:
    if math.isinf(attenuation):
        return NO_SIGNAL
    return tx_power - attenuation


def frame_error_rate(rx_dbm: float, p: PropagationParams) -> float:
    if rx_dbm >= p.fer_clear:
        return 0.0
    if rx_dbm <= p.fer_floor:
        return 1.0
    return (p.fer_clear - rx_dbm) / (p.fer_clear - p.fer_floor)


def reachable(rx_dbm: float, p: PropagationParams) -> bool:
    return rx_dbm >= p.rx_sensitivity


@dataclass(frozen=True)
class Interferer:
    id: int
    band: Band
    utilization: float
    channel: Optional[int] = None  # None occupies the whole band
    tx_power: float = 20.0

    def hits(self, channel: Channel) -> bool:
        return self.band is channel.band and (self.channel is None or self.channel == channel.index)


@dataclass(frozen=True)
class ContentionClique:
    channel: Channel
    members: frozenset
    external_utilization: float = 0.0

    @property
    def key(self) -> tuple:
        return (self.channel, tuple(sorted(self.members)))


def senses(matrix: AttenuationMatrix, a: int, b: int, tx_power: Mapping[int, float],
           p: PropagationParams) -> bool:
    """Mutual carrier sense between two transmitters."""
    if a == b:
        return True
    atten = matrix.get(a, b)
    return (rssi(tx_power[a], atten) >= p.cs_threshold
            and rssi(tx_power[b], atten) >= p.cs_threshold)


def interferer_sensed(matrix: AttenuationMatrix, node: int, intf: Interferer,
                      p: PropagationParams) -> bool:
    if intf.id not in matrix or node not in matrix:
        return False
    return rssi(intf.tx_power, matrix.get(node, intf.id)) >= p.cs_threshold


def _maximal_cliques(vertices: list[int], adj: dict[int, set[int]]) -> list[frozenset]:
    # Bron-Kerbosch with pivoting
    found: list[frozenset] = []

    def expand(r: set, p: set, x: set) -> None:
        if not p and not x:
            found.append(frozenset(r))
            return
        pivot = max(p | x, key=lambda u: (len(adj[u] & p), -u))
        for v in sorted(p - adj[pivot]):
            expand(r | {v}, p & adj[v], x & adj[v])
            p = p - {v}
            x = x | {v}

    expand(set(), set(vertices), set())
    return found


def build_contention_cliques(transmitters: Iterable[tuple[int, Channel]],
                             interferers: Iterable[Interferer],
                             matrix: AttenuationMatrix,
                             tx_power: Mapping[int, float],
                             params: PropagationParams,
                             extra_utilization: Optional[Mapping[tuple[int, Channel], float]] = None,
                             ) -> list[ContentionClique]:
    """Maximal mutually-sensing transmitter groups for each channel.

    ``transmitters`` are (node id, channel) pairs with traffic on that channel.
    Interferer airtime hitting the channel is added to a clique when any of
    its members senses the interferer. ``extra_utilization`` charges extra
    busy time (e.g. control frames) against any clique containing the key.
    """
    by_channel: dict[Channel, set[int]] = {}
    for node, ch in transmitters:
        by_channel.setdefault(ch, set()).add(node)
    interferers = list(interferers)
    extra = extra_utilization or {}
    out: list[ContentionClique] = []
    for ch in sorted(by_channel):
        members = sorted(by_channel[ch])
        adj = {u: {v for v in members if v != u and senses(matrix, u, v, tx_power, params)}
               for u in members}
        for group in _maximal_cliques(members, adj):
            ext = sum(i.utilization for i in interferers
                      if i.hits(ch) and any(interferer_sensed(matrix, m, i, params) for m in group))
            ext += sum(extra.get((m, ch), 0.0) for m in group)
            out.append(ContentionClique(ch, group, min(ext, 1.0)))
    out.sort(key=lambda c: c.key)
    return out
