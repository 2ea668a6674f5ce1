"""Link quality: 802.11s airtime cost plus the AP's advertised average load."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence, TypeVar

from .core import Band, Channel

LOAD_CEILING = 1.0 - 1e-6


class InvalidObservation(ValueError):
    pass


class InvalidSample(ValueError):
    pass


@dataclass(frozen=True)
class AirtimeParams:
    overhead_us: float = 100.0
    test_frame_bits: float = 8192.0

    def __post_init__(self):
        if self.overhead_us < 0 or self.test_frame_bits <= 0:
            raise ValueError("overhead must be >= 0 and test frame size > 0")


@dataclass(frozen=True)
class LoadTracker:
    utilization: float = 0.0
    alpha: float = 0.25
    sample_period: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.utilization < 1.0:
            raise ValueError("utilization must lie in [0, 1)")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("EWMA alpha must lie in (0, 1]")


def update_load(tracker: LoadTracker, busy_fraction: float) -> LoadTracker:
    if not 0.0 <= busy_fraction <= 1.0:
        raise InvalidSample(f"busy fraction {busy_fraction} outside [0, 1]")
    rho = (1.0 - tracker.alpha) * tracker.utilization + tracker.alpha * busy_fraction
    return replace(tracker, utilization=min(rho, LOAD_CEILING))


@dataclass(frozen=True)
class LinkObservation:
    ap_id: int
    band: Band
    channel: Channel
    rssi: float
    frame_error_rate: float
    rate: float
    advertised_load: float = 0.0


def airtime(p: AirtimeParams, obs: LinkObservation) -> float:
    """Channel time in microseconds to deliver one test frame over the link."""
    if obs.rate <= 0:
        raise InvalidObservation(f"non-positive link rate {obs.rate}")
    if not 0.0 <= obs.frame_error_rate < 1.0:
        raise InvalidObservation(f"frame error rate {obs.frame_error_rate} outside [0, 1)")
    tx_us = p.test_frame_bits / obs.rate * 1e6
    return (p.overhead_us + tx_us) / (1.0 - obs.frame_error_rate)


def default_load_weight(p: AirtimeParams, rate: float) -> float:
    return p.test_frame_bits / rate * 1e6


def link_quality(p: AirtimeParams, obs: LinkObservation, load_weight: Optional[float] = None) -> float:
    """Lower is better. ``load_weight`` (µs) defaults to the test frame's transmit time."""
    w = default_load_weight(p, obs.rate) if load_weight is None else load_weight
    return airtime(p, obs) + obs.advertised_load * w


T = TypeVar("T")


def rank_candidates(entries: Sequence[tuple[int, float, float, T]]) -> list[tuple[int, float, float, T]]:
    """Sort (ap_id, metric, rssi, payload) best-first: metric, then stronger rssi, then lower id."""
    return sorted(entries, key=lambda e: (e[1], -e[2], e[0]))
