"""Beaconing, scanning, AP selection, association and serving-radio activation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Optional

from .core import CHANNELS, AssocState, Band, Channel, RadioRole, other_band
from .metric import AirtimeParams, LinkObservation, link_quality, rank_candidates
from .network import ASSIGNED, Network
from .radio import interferer_sensed


class NoAPAvailable(LookupError):
    pass


class TargetVanished(RuntimeError):
    pass


@dataclass(frozen=True)
class Beacon:
    network_name: str
    ap_id: int
    band: Band
    channel: Channel
    advertised_load: float
    is_hardware: bool


@dataclass(frozen=True)
class ScanEntry:
    beacon: Beacon
    rssi: float
    observation: LinkObservation


def emit_beacon(net: Network, ap_id: int) -> Optional[Beacon]:
    if not net.beaconing(ap_id):
        return None
    ap = net.nodes[ap_id]
    sv = ap.serving
    return Beacon(net.name, ap_id, sv.band, sv.channel, net.loads[ap_id].utilization, ap.is_hardware)


def scan(net: Network, node_id: int, bands: Optional[Iterable[Band]] = None,
         exclude: Iterable[int] = ()) -> list[ScanEntry]:
    """Every beacon ``node_id`` can hear on the given bands, in AP id order."""
    wanted = set(bands) if bands is not None else set(net.bands())
    skip = set(exclude)
    out = []
    for ap in net.serving_nodes():
        if ap.id == node_id or ap.id in skip:
            continue
        beacon = emit_beacon(net, ap.id)
        if beacon is None or beacon.band not in wanted:
            continue
        obs = net.observe(ap.id, node_id)
        if obs is None:
            continue
        out.append(ScanEntry(beacon, obs.rssi, obs))
    return out


def entry_metric(entry: ScanEntry, params: AirtimeParams, load_weight: Optional[float] = None) -> float:
    return link_quality(params, entry.observation, load_weight)


def select_ap(entries: list[ScanEntry], params: AirtimeParams,
              load_weight: Optional[float] = None) -> ScanEntry:
    if not entries:
        raise NoAPAvailable("no access point heard during scan")
    ranked = rank_candidates([(e.beacon.ap_id, entry_metric(e, params, load_weight), e.rssi, e)
                              for e in entries])
    return ranked[0][3]


def channel_assign(band: Band, utilization: Mapping[int, float], exclude: Iterable[int] = ()) -> Channel:
    """Least-utilized channel on ``band``; ties go to the lowest index.

    Channels in ``exclude`` are skipped unless nothing else is left.
    """
    skip = set(exclude)
    pool = [c for c in CHANNELS[band] if c not in skip] or list(CHANNELS[band])
    best = min(pool, key=lambda c: (utilization.get(c, 0.0), c))
    return Channel(band, best)


def observed_utilization(net: Network, node_id: int, band: Band) -> dict[int, float]:
    """Per-channel busy estimate seen from ``node_id``.

    Each audible AP contributes its advertised load plus the airtime its own
    beacons take; sensed interferers add their utilization.
    """
    util = {c: 0.0 for c in CHANNELS[band]}
    for entry in scan(net, node_id, [band]):
        util[entry.beacon.channel.index] += (entry.beacon.advertised_load
                                             + net.beacon_share(entry.observation.rate))
    for intf in net.interferers.values():
        if intf.band is band and interferer_sensed(net.matrix, node_id, intf, net.prop):
            for c in util:
                if intf.channel is None or intf.channel == c:
                    util[c] += intf.utilization
    return {c: min(u, 1.0) for c, u in util.items()}


def serving_channel_for(net: Network, node_id: int, upstream: Channel) -> Channel:
    if net.single_band:
        if net.channel_policy != ASSIGNED:
            return Channel(Band.B24, CHANNELS[Band.B24][0])
        util = observed_utilization(net, node_id, Band.B24)
        return channel_assign(Band.B24, util, exclude=[upstream.index])
    band = other_band(upstream.band)
    return channel_assign(band, observed_utilization(net, node_id, band))


def association_ok(net: Network, node_id: int, ap_id: int, channel: Channel) -> bool:
    """Target still beacons on ``channel``, is audible, and is not below us in the tree."""
    if ap_id not in net.nodes or ap_id == node_id:
        return False
    if ap_id in net.descendants(node_id):
        return False
    return net.observe(ap_id, node_id, channel) is not None


def activate_serving(net: Network, node_id: int) -> Channel:
    node = net.nodes[node_id]
    up = node.upstream
    sv = node.serving
    channel = serving_channel_for(net, node_id, up.channel)
    if sv is None:
        sv = node.idle_radio(channel.band)
    elif sv.band is not channel.band:
        sv.deactivate()
        sv = node.idle_radio(channel.band)
    sv.activate(RadioRole.SERVING, channel)
    return channel


def tune_upstream(net: Network, node_id: int, channel: Channel) -> None:
    node = net.nodes[node_id]
    up = node.upstream
    if up is not None and up.band is channel.band:
        up.channel = channel
        return
    if up is not None:
        up.deactivate()
    radio = node.idle_radio(channel.band)
    if radio is None:
        # the serving radio occupies the only radio of this band; it moves later
        sv = node.serving
        sv.deactivate()
        radio = sv
    radio.activate(RadioRole.UPSTREAM, channel)


def complete_association(net: Network, node_id: int, ap_id: int, channel: Channel) -> Channel:
    """Finish a first-time join: attach, tune upstream, light up the serving radio."""
    node = net.nodes[node_id]
    if node.assoc is not AssocState.ASSOCIATING:
        raise RuntimeError(f"node {node_id} is not associating")
    if not association_ok(net, node_id, ap_id, channel):
        node.transition(AssocState.SCANNING)
        raise TargetVanished(f"AP {ap_id} no longer available on {channel}")
    for r in node.radios:
        if r.role is not RadioRole.IDLE:
            r.deactivate()
    tune_upstream(net, node_id, channel)
    net.attach(node_id, ap_id)
    node.transition(AssocState.ASSOCIATED)
    return activate_serving(net, node_id)


def join(net: Network, node_id: int) -> tuple[int, Channel, Channel]:
    """Scan, select and associate in one step (no timers).

    Returns (ap id, upstream channel, serving channel).
    """
    node = net.nodes[node_id]
    if node.assoc is not AssocState.SCANNING:
        raise RuntimeError(f"node {node_id} must be scanning to join")
    chosen = select_ap(scan(net, node_id), net.airtime, net.load_weight)
    node.transition(AssocState.ASSOCIATING, chosen.beacon.ap_id)
    serving = complete_association(net, node_id, chosen.beacon.ap_id, chosen.beacon.channel)
    return chosen.beacon.ap_id, chosen.beacon.channel, serving
