"""Average per-node throughput over a measurement window."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping


class WindowError(ValueError):
    pass


@dataclass(frozen=True)
class DeliverySegment:
    """``rate`` bits/s reached ``receiver`` for flow ``flow_id`` during [t0, t1)."""

    t0: float
    t1: float
    flow_id: str
    receiver: int
    rate: float


@dataclass
class ThroughputReport:
    window: tuple[float, float]
    node_count: int
    received_bits: dict[int, float]
    average_bps: float
    flow_rates: dict[str, float] = field(default_factory=dict)  # mean delivered rate in window
    drops: dict[str, float] = field(default_factory=dict)  # bits lost per flow

    @property
    def span(self) -> float:
        return self.window[1] - self.window[0]


def average_throughput(received_bits: Mapping[int, float], span: float, node_count: int) -> float:
    """Sum of bits received by all nodes divided by (window length x node count)."""
    if span <= 0:
        raise WindowError("measurement window must have positive length")
    if node_count <= 0:
        raise WindowError("node count must be positive")
    return sum(received_bits.values()) / (span * node_count)


def throughput(segments: Iterable[DeliverySegment], window: tuple[float, float],
               nodes: Iterable[int], drops: Mapping[str, float] | None = None) -> ThroughputReport:
    a, b = window
    if b <= a:
        raise WindowError(f"empty measurement window {window}")
    nodes = list(nodes)
    received = {n: 0.0 for n in nodes}
    per_flow: dict[str, float] = {}
    for s in segments:
        lo, hi = max(s.t0, a), min(s.t1, b)
        per_flow.setdefault(s.flow_id, 0.0)
        if hi <= lo:
            continue
        bits = s.rate * (hi - lo)
        received[s.receiver] = received.get(s.receiver, 0.0) + bits
        per_flow[s.flow_id] += bits
    avg = average_throughput(received, b - a, len(nodes))
    return ThroughputReport((a, b), len(nodes), received, avg,
                            {k: v / (b - a) for k, v in sorted(per_flow.items())},
                            dict(drops or {}))
