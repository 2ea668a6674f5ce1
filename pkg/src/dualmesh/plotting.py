"""PNG figures rendered next to the CSV output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _save(fig, path: Path) -> Path:
    # no timestamp metadata, so equal inputs give equal files
    fig.savefig(path, dpi=110, metadata={"Software": None})
    plt.close(fig)
    return Path(path)


def plot_flow_rates(result, path: Path) -> Path:
    """Step plot of every flow's delivered rate over the run."""
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    end = result.report.window[1]
    by_flow: dict[str, list[tuple[float, float]]] = {}
    for t, fid, rate in result.series:
        by_flow.setdefault(fid, []).append((t, rate))
    for fid, pts in by_flow.items():
        xs = [t for t, _ in pts] + [end]
        ys = [r / 1e6 for _, r in pts] + [pts[-1][1] / 1e6]
        ax.step(xs, ys, where="post", label=fid)
    a, b = result.report.window
    ax.axvspan(a, b, color="0.9", zorder=0)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("delivered rate (Mbps)")
    ax.set_title(f"{result.scenario} ({result.mode})")
    if by_flow:
        ax.legend(fontsize="small")
    fig.tight_layout()
    return _save(fig, path)


def plot_comparison(rows, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(max(4.0, 1.6 * len(rows) + 2), 3.6))
    x = list(range(len(rows)))
    w = 0.38
    ax.bar([i - w / 2 for i in x], [r.dual_avg_bps / 1e6 for r in rows], w, label="dual band")
    ax.bar([i + w / 2 for i in x], [r.single_avg_bps / 1e6 for r in rows], w, label="single band")
    ax.set_xticks(x)
    ax.set_xticklabels([r.case for r in rows])
    ax.set_ylabel("average throughput per node (Mbps)")
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)


def plot_sweep(param: str, rows, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(5.2, 3.4))
    ax.plot([v for v, _ in rows], [a / 1e6 for _, a in rows], marker="o")
    ax.set_xlabel(param)
    ax.set_ylabel("average throughput per node (Mbps)")
    fig.tight_layout()
    return _save(fig, path)
