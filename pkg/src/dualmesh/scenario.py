"""Scenario documents: schema, parsing with positioned errors, and derived variants.

Scenarios are YAML. The schema is documented in ``docs/scenario-schema.md``;
unknown keys are rejected so typos never pass silently.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from importlib import resources
from pathlib import Path
from typing import Annotated, Any, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .core import CHANNELS, Band

BUNDLED = ("fig1_dual", "case_i", "case_ii", "case_iii", "three_node", "handoff_demo",
           "interference_demo", "scale_50")


class ScenarioError(ValueError):
    """Parse or validation failure; ``errors`` holds (location, message) pairs."""

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = errors
        super().__init__("\n".join(f"{loc}: {msg}" for loc, msg in errors))


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=False)


BandName = Literal["2.4", "5.8"]


class HardwareAPSpec(_Strict):
    id: int
    band: BandName
    channel: int
    tx_power: float = 20.0
    bit_rate: float = 11e6

    @model_validator(mode="after")
    def _channel_in_band(self):
        if self.channel not in CHANNELS[Band(self.band)]:
            raise ValueError(f"channel {self.channel} is not valid in the {self.band} GHz band")
        return self


class NodeSpec(_Strict):
    id: int
    start: float = Field(0.0, ge=0)
    tx_power: float = 20.0
    bit_rate: float = Field(11e6, gt=0)


class PathLossSpec(_Strict):
    exponent: float = 3.0
    ref_loss: float = 40.0
    ref_distance: float = 1.0
    max_loss: Optional[float] = None


class AttenuationSpec(_Strict):
    default: float = Field(math.inf, ge=0)
    positions: dict[int, tuple[float, float]] = Field(default_factory=dict)
    pathloss: PathLossSpec = Field(default_factory=PathLossSpec)
    links: list[tuple[int, int, float]] = Field(default_factory=list)


class InterfererSpec(_Strict):
    id: int
    band: BandName
    channel: Optional[int] = None
    utilization: float = Field(ge=0, lt=1)
    tx_power: float = 20.0


class FlowSpec(_Strict):
    id: str
    src: int
    dst: Union[int, str]
    rate: float = Field(gt=0)
    start: float = Field(0.0, ge=0)
    stop: Optional[float] = None

    @model_validator(mode="after")
    def _dst_form(self):
        if isinstance(self.dst, str) and self.dst != "internet" and not self.dst.startswith("service:"):
            raise ValueError("dst must be a node id, 'internet' or 'service:<name>'")
        if self.stop is not None and self.stop <= self.start:
            raise ValueError("stop must come after start")
        return self


class TrafficSpec(_Strict):
    flows: list[FlowSpec] = Field(default_factory=list)


class SetAttenuation(_Strict):
    time: float = Field(ge=0)
    kind: Literal["set_attenuation"]
    a: int
    b: int
    db: float = Field(ge=0)


class RemoveNode(_Strict):
    time: float = Field(ge=0)
    kind: Literal["remove_node"]
    node: int


class AddNode(_Strict):
    time: float = Field(ge=0)
    kind: Literal["add_node"]
    node: NodeSpec
    links: list[tuple[int, float]] = Field(default_factory=list)


class SetInterferer(_Strict):
    time: float = Field(ge=0)
    kind: Literal["set_interferer"]
    id: int
    utilization: float = Field(ge=0, lt=1)


DynamismSpec = Annotated[Union[SetAttenuation, RemoveNode, AddNode, SetInterferer],
                         Field(discriminator="kind")]


class FormationSpec(_Strict):
    beacon_interval: float = Field(0.1, gt=0)
    scan_duration: float = Field(0.02, gt=0)
    retry_backoff: float = Field(1.0, gt=0)
    assoc_delay: float = Field(0.01, ge=0)
    channel_switch_delay: float = Field(0.005, ge=0)


class HandoffSpec(_Strict):
    T: float = Field(1.0, gt=0)
    theta: float = Field(3000.0, gt=0)
    k: int = Field(3, ge=1)
    alpha: float = Field(1.5, ge=1)


class AirtimeSpec(_Strict):
    overhead_us: float = Field(100.0, ge=0)
    test_frame_bits: float = Field(8192.0, gt=0)
    load_weight_us: Optional[float] = Field(None, ge=0)


class LoadSpec(_Strict):
    alpha: float = Field(0.25, gt=0, le=1)
    sample_period: float = Field(0.1, gt=0)


class PropagationSpec(_Strict):
    rx_sensitivity: float = -82.0
    cs_threshold: float = -82.0
    fer_clear: float = -70.0
    fer_floor: float = -90.0

    @model_validator(mode="after")
    def _ordering(self):
        if not self.fer_floor < self.fer_clear:
            raise ValueError("fer_floor must be below fer_clear")
        if not self.rx_sensitivity <= self.cs_threshold <= self.fer_clear:
            raise ValueError("need rx_sensitivity <= cs_threshold <= fer_clear")
        return self


class TrafficParamsSpec(_Strict):
    reply_window: float = Field(0.5, gt=0)
    control_frame_bits: float = Field(2048.0, gt=0)
    dedup_capacity: int = Field(1024, ge=1)


class EngineSpec(_Strict):
    eta: float = Field(0.5, gt=0, le=1)


class ProtocolSpec(_Strict):
    formation: FormationSpec = Field(default_factory=FormationSpec)
    handoff: HandoffSpec = Field(default_factory=HandoffSpec)
    airtime: AirtimeSpec = Field(default_factory=AirtimeSpec)
    load: LoadSpec = Field(default_factory=LoadSpec)
    propagation: PropagationSpec = Field(default_factory=PropagationSpec)
    traffic: TrafficParamsSpec = Field(default_factory=TrafficParamsSpec)
    engine: EngineSpec = Field(default_factory=EngineSpec)


class SimSpec(_Strict):
    duration: float = Field(gt=0)
    seed: int = Field(1, ge=0)
    window: Optional[tuple[float, float]] = None

    @model_validator(mode="after")
    def _window_inside(self):
        if self.window is not None:
            a, b = self.window
            if not 0 <= a < b <= self.duration:
                raise ValueError("window must satisfy 0 <= start < end <= duration")
        return self

    def measurement_window(self) -> tuple[float, float]:
        return self.window if self.window is not None else (self.duration / 2, self.duration)


class Scenario(_Strict):
    name: str = "scenario"
    network: str = "mesh"
    mode: Literal["dual", "single"] = "dual"
    benchmark_channels: Literal["shared", "assigned"] = "shared"
    hardware_ap: HardwareAPSpec
    nodes: list[NodeSpec] = Field(default_factory=list)
    attenuation: AttenuationSpec = Field(default_factory=AttenuationSpec)
    interferers: list[InterfererSpec] = Field(default_factory=list)
    services: dict[str, list[int]] = Field(default_factory=dict)
    traffic: TrafficSpec = Field(default_factory=TrafficSpec)
    dynamism: list[DynamismSpec] = Field(default_factory=list)
    protocol: ProtocolSpec = Field(default_factory=ProtocolSpec)
    sim: SimSpec

    @model_validator(mode="after")
    def _references(self):
        problems = []
        node_ids = [self.hardware_ap.id] + [n.id for n in self.nodes]
        added = [d.node.id for d in self.dynamism if isinstance(d, AddNode)]
        intf_ids = [i.id for i in self.interferers]
        everything = node_ids + added + intf_ids
        if len(set(everything)) != len(everything):
            dup = sorted({x for x in everything if everything.count(x) > 1})
            problems.append(f"duplicate ids {dup}")
        known = set(everything)
        nodes_known = set(node_ids + added)
        for a, b, _ in self.attenuation.links:
            for x in (a, b):
                if x not in known:
                    problems.append(f"attenuation link references unknown id {x}")
            if a == b:
                problems.append(f"attenuation link from {a} to itself")
        for x in self.attenuation.positions:
            if x not in known:
                problems.append(f"position given for unknown id {x}")
        for f in self.traffic.flows:
            if f.src not in nodes_known:
                problems.append(f"flow {f.id} src {f.src} is not a declared node")
            if isinstance(f.dst, int) and f.dst not in nodes_known:
                problems.append(f"flow {f.id} dst {f.dst} is not a declared node")
            if f.src == self.hardware_ap.id and not isinstance(f.dst, int):
                problems.append(f"flow {f.id}: the hardware AP can only send to a node id")
            if isinstance(f.dst, str) and f.dst.startswith("service:") and f.dst[8:] not in self.services:
                problems.append(f"flow {f.id} asks for undeclared service {f.dst[8:]!r}")
            if f.dst == f.src:
                problems.append(f"flow {f.id} sends to itself")
        if len({f.id for f in self.traffic.flows}) != len(self.traffic.flows):
            problems.append("duplicate flow ids")
        for name, providers in self.services.items():
            for p in providers:
                if p not in nodes_known or p == self.hardware_ap.id:
                    problems.append(f"service {name!r} provider {p} is not a mesh node")
        for i in self.interferers:
            if i.channel is not None and i.channel not in CHANNELS[Band(i.band)]:
                problems.append(f"interferer {i.id} channel {i.channel} not in {i.band} GHz band")
        for d in self.dynamism:
            refs = {SetAttenuation: lambda d: [d.a, d.b], RemoveNode: lambda d: [d.node],
                    AddNode: lambda d: [x for x, _ in d.links], SetInterferer: lambda d: [d.id]}[type(d)](d)
            for x in refs:
                if x not in known:
                    problems.append(f"{d.kind} at t={d.time} references unknown id {x}")
            if isinstance(d, RemoveNode) and d.node == self.hardware_ap.id:
                problems.append("the hardware AP cannot be removed")
            if isinstance(d, SetInterferer) and d.id not in intf_ids:
                problems.append(f"set_interferer targets {d.id}, which is not an interferer")
        if self.mode == "single" and self.hardware_ap.band != "2.4":
            problems.append("single-band mode needs the hardware AP on 2.4 GHz")
        if problems:
            raise ValueError("; ".join(problems))
        return self


def _line_map(text: str) -> dict[tuple, int]:
    """Map YAML key paths to 1-based line numbers for error messages."""
    out: dict[tuple, int] = {}
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError:
        return out

    def walk(node, path):
        out[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                key = k.value
                try:
                    key = int(key)
                except (TypeError, ValueError):
                    pass
                out[path + (key,)] = k.start_mark.line + 1
                walk(v, path + (key,))
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                walk(v, path + (i,))

    if root is not None:
        walk(root, ())
    return out


def _locate(loc: tuple, lines: dict[tuple, int]) -> str:
    # pydantic inserts union tags such as 'set_attenuation' into loc; keep what resolves
    path = tuple(x for x in loc if not (isinstance(x, str) and x in
                                        ("set_attenuation", "remove_node", "add_node", "set_interferer",
                                         "int", "str")))
    text = ".".join(str(x) if not isinstance(x, int) else f"[{x}]" for x in path).replace(".[", "[")
    probe = path
    while probe and probe not in lines:
        probe = probe[:-1]
    line = lines.get(probe)
    where = text or "<document>"
    return f"line {line}: {where}" if line else where


def from_dict(data: Any, text: str = "") -> Scenario:
    if data is None:
        raise ScenarioError([("<document>", "empty scenario; hardware_ap and sim are required")])
    if not isinstance(data, dict):
        raise ScenarioError([("<document>", "top level must be a mapping")])
    try:
        return Scenario.model_validate(data)
    except ValidationError as exc:
        lines = _line_map(text) if text else {}
        errors = []
        for e in exc.errors():
            msg = e["msg"]
            if e["type"] == "extra_forbidden":
                msg = "unknown key"
            errors.append((_locate(tuple(e["loc"]), lines), msg))
        raise ScenarioError(errors) from None


def parse_scenario(text: str) -> Scenario:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}" if mark else "<document>"
        raise ScenarioError([(where, f"syntax error: {getattr(exc, 'problem', exc)}")]) from None
    return from_dict(data, text)


def to_dict(s: Scenario) -> dict:
    return s.model_dump(mode="python")


def serialize(s: Scenario) -> str:
    return yaml.safe_dump(_plain(to_dict(s)), sort_keys=False, default_flow_style=None)


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


def scenario_hash(s: Scenario) -> str:
    blob = json.dumps(_plain(to_dict(s)), sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("dualmesh") / "scenarios" / f"{name}.yaml"))


def load_scenario(ref: Union[str, Path]) -> Scenario:
    """Load from a file path, or by bundled name (``fig1_dual`` or ``scenarios/fig1_dual``)."""
    p = Path(ref)
    if p.is_file():
        return parse_scenario(p.read_text())
    name = p.name[:-5] if p.name.endswith(".yaml") else p.name
    if name in BUNDLED:
        return parse_scenario(bundled_path(name).read_text())
    raise FileNotFoundError(f"no scenario file or bundled scenario named {str(ref)!r}")


def derive_single_band(s: Scenario, policy: Optional[str] = None) -> Scenario:
    """The two-2.4 GHz-card benchmark twin of a dual-band scenario."""
    if s.mode != "dual":
        raise ValueError("scenario is already single-band")
    data = copy.deepcopy(to_dict(s))
    data["mode"] = "single"
    if policy is not None:
        data["benchmark_channels"] = policy
    data["hardware_ap"]["band"] = "2.4"
    data["hardware_ap"]["channel"] = CHANNELS[Band.B24][0]
    return Scenario.model_validate(data)


def set_path(s: Scenario, dotted: str, value) -> Scenario:
    """Copy of ``s`` with the field at a dotted path (``protocol.handoff.T``) replaced."""
    data = copy.deepcopy(to_dict(s))
    parts = dotted.split(".")
    cur = data
    for i, part in enumerate(parts[:-1]):
        key = int(part) if isinstance(cur, list) else part
        try:
            cur = cur[key]
        except (KeyError, IndexError, TypeError):
            raise ScenarioError([(".".join(parts[: i + 1]), "no such field")]) from None
    last = parts[-1]
    if isinstance(cur, list):
        cur[int(last)] = value
    else:
        if last not in cur:
            raise ScenarioError([(dotted, "no such field")])
        cur[last] = value
    return from_dict(data)
