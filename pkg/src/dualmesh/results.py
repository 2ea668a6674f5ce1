"""Result files: summary, per-flow rate series, traces, comparison tables and plot scripts."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from .engine.sim import SimResult

FORMATS = ("csv", "summary", "all")
FLOWS_HEADER = ["time_s", "flow_id", "rate_bps"]
COMPARISON_HEADER = ["case", "dual_avg_bps", "single_avg_bps", "ratio"]


class OutputError(OSError):
    pass


@dataclass(frozen=True)
class ComparisonRow:
    case: str
    dual_avg_bps: float
    single_avg_bps: float

    @property
    def ratio(self) -> float:
        if self.single_avg_bps == 0:
            return float("inf") if self.dual_avg_bps > 0 else float("nan")
        return self.dual_avg_bps / self.single_avg_bps


def _prepare(out: Path) -> Path:
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _write(path: Path, text: str) -> Path:
    try:
        path.write_text(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc
    return path


def summary_dict(r: SimResult) -> dict:
    rep = r.report
    handoffs: dict[str, int] = {}
    for h in r.handoffs:
        handoffs[h.kind] = handoffs.get(h.kind, 0) + 1
    latencies = [h.latency for h in r.handoffs if h.kind != "orphan" and h.latency is not None]
    return {
        "scenario": r.scenario,
        "mode": r.mode,
        "seed": r.seed,
        "scenario_hash": r.scenario_hash,
        "window_s": list(rep.window),
        "node_count": rep.node_count,
        "average_throughput_bps": rep.average_bps,
        "received_bits": {str(k): v for k, v in sorted(rep.received_bits.items())},
        "flow_rates_bps": rep.flow_rates,
        "dropped_bits": dict(sorted(rep.drops.items())),
        "hop_count": r.hops,
        "handoffs": dict(sorted(handoffs.items())),
        "max_handoff_latency_s": max(latencies) if latencies else None,
        "events": r.counters,
        "parents": {str(k): v for k, v in r.parents.items()},
    }


def summary_text(r: SimResult) -> str:
    return json.dumps(summary_dict(r), indent=2, sort_keys=False) + "\n"


def flows_csv_rows(r: SimResult) -> list[list[str]]:
    return [[repr(float(t)), fid, repr(float(rate))] for t, fid, rate in r.series]


def write_flows_csv(r: SimResult, path: Path) -> Path:
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(FLOWS_HEADER)
            w.writerows(flows_csv_rows(r))
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc
    return path


def emit_run(r: SimResult, out: Path, fmt: str = "all", plots: bool = True) -> list[Path]:
    """Write one run's files under ``out``; returns the paths written."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}")
    out = _prepare(out)
    written = []
    if fmt in ("summary", "all"):
        written.append(_write(out / "summary.json", summary_text(r)))
    if fmt in ("csv", "all"):
        written.append(write_flows_csv(r, out / "flows.csv"))
    if fmt == "all":
        written.append(_write(out / "trace.txt", r.trace_text()))
        if plots:
            from .plotting import plot_flow_rates
            written.append(plot_flow_rates(r, out / "flows.png"))
    return written


def write_comparison_csv(rows: Iterable[ComparisonRow], path: Path) -> Path:
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(COMPARISON_HEADER)
            for row in rows:
                w.writerow([row.case, repr(row.dual_avg_bps), repr(row.single_avg_bps), repr(row.ratio)])
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc
    return path


def read_comparison_csv(path: Path) -> list[ComparisonRow]:
    with open(path, newline="") as fh:
        return [ComparisonRow(d["case"], float(d["dual_avg_bps"]), float(d["single_avg_bps"]))
                for d in csv.DictReader(fh)]


PLOT_SCRIPT = '''"""Grouped bar chart of dual-band vs single-band average throughput per case.

Usage: python plot_comparison.py [comparison.csv] [output.png]
"""
import csv
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

src = sys.argv[1] if len(sys.argv) > 1 else "comparison.csv"
dst = sys.argv[2] if len(sys.argv) > 2 else "comparison.png"
with open(src, newline="") as fh:
    rows = list(csv.DictReader(fh))
cases = [r["case"] for r in rows]
dual = [float(r["dual_avg_bps"]) / 1e6 for r in rows]
single = [float(r["single_avg_bps"]) / 1e6 for r in rows]
x = range(len(cases))
width = 0.38
fig, ax = plt.subplots(figsize=(max(4.0, 1.6 * len(cases) + 2), 3.6))
ax.bar([i - width / 2 for i in x], dual, width, label="dual band (2.4 + 5.8 GHz)")
ax.bar([i + width / 2 for i in x], single, width, label="single band (2.4 GHz)")
ax.set_xticks(list(x))
ax.set_xticklabels(cases)
ax.set_ylabel("average throughput per node (Mbps)")
ax.legend()
fig.tight_layout()
fig.savefig(dst, dpi=120)
'''


def write_plot_script(path: Path) -> Path:
    return _write(path, PLOT_SCRIPT)


def emit_comparison(rows: list[ComparisonRow], out: Path, fmt: str = "all", plots: bool = True) -> list[Path]:
    out = _prepare(out)
    written = []
    if fmt in ("csv", "all"):
        written.append(write_comparison_csv(rows, out / "comparison.csv"))
        written.append(write_plot_script(out / "plot_comparison.py"))
    if fmt in ("summary", "all"):
        body = [{"case": r.case, "dual_avg_bps": r.dual_avg_bps, "single_avg_bps": r.single_avg_bps,
                 "ratio": r.ratio} for r in rows]
        written.append(_write(out / "comparison.json", json.dumps(body, indent=2) + "\n"))
    if fmt == "all" and plots:
        from .plotting import plot_comparison
        written.append(plot_comparison(rows, out / "comparison.png"))
    return written


def write_sweep_csv(param: str, rows: list[tuple[object, float]], path: Path,
                    extra: Optional[list[str]] = None) -> Path:
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["parameter", "value", "avg_bps"])
            for value, avg in rows:
                w.writerow([param, json.dumps(value), repr(avg)])
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc
    return path
