"""Deterministic event queue: strict (time, seq) order."""

from __future__ import annotations

import enum
import heapq
import json
from dataclasses import dataclass, field
from typing import Any, Optional


class EventKind(enum.Enum):
    BEACON_TX = "BeaconTx"
    SCAN_COMPLETE = "ScanComplete"
    ASSOC_COMPLETE = "AssocComplete"
    HANDOFF_CHECK = "HandoffCheck"
    CONTROL_FRAME = "ControlFrame"
    DYNAMISM = "DynamismEvent"
    FLOW_START = "FlowStart"
    FLOW_STOP = "FlowStop"
    METRIC_SAMPLE = "MetricSample"
    SIM_END = "SimEnd"


@dataclass(order=True)
class Event:
    time: float
    seq: int
    kind: EventKind = field(compare=False)
    subject: Any = field(compare=False, default=None)
    payload: dict = field(compare=False, default_factory=dict)

    def line(self, note: Optional[dict] = None) -> str:
        body = dict(self.payload)
        if note:
            body.update(note)
        return f"{self.time:.9f} {self.seq} {self.kind.value} {self.subject} " \
               f"{json.dumps(body, sort_keys=True, default=str)}"


class EventQueue:
    def __init__(self):
        self._heap: list[Event] = []
        self._seq = 0

    def schedule(self, time: float, kind: EventKind, subject=None, **payload) -> Event:
        ev = Event(time, self._seq, kind, subject, payload)
        self._seq += 1
        heapq.heappush(self._heap, ev)
        return ev

    def pop(self) -> Event:
        return heapq.heappop(self._heap)

    def peek_time(self) -> float:
        return self._heap[0].time

    def __len__(self) -> int:
        return len(self._heap)
