import csv
import json
import math
import subprocess
import sys

import pytest

from dualmesh.engine.sim import run
from dualmesh.results import (COMPARISON_HEADER, FLOWS_HEADER, ComparisonRow, OutputError,
                              emit_comparison, emit_run, read_comparison_csv, summary_dict)
from dualmesh.scenario import load_scenario


@pytest.fixture(scope="module")
def fig1_result():
    return run(load_scenario("fig1_dual"))


def test_emit_run_writes_all_files(tmp_path, fig1_result):
    paths = emit_run(fig1_result, tmp_path)
    assert sorted(p.name for p in paths) == ["flows.csv", "flows.png", "summary.json", "trace.txt"]
    with open(tmp_path / "flows.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == FLOWS_HEADER
    assert {r[1] for r in rows[1:]} == {"e2", "e3"}
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["average_throughput_bps"] == pytest.approx(1.375e6)
    assert summary["node_count"] == 4 and len(summary["scenario_hash"]) == 64
    assert (tmp_path / "flows.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_format_selection(tmp_path, fig1_result):
    assert [p.name for p in emit_run(fig1_result, tmp_path / "a", "csv")] == ["flows.csv"]
    assert [p.name for p in emit_run(fig1_result, tmp_path / "b", "summary")] == ["summary.json"]
    assert "flows.png" not in [p.name for p in emit_run(fig1_result, tmp_path / "c", plots=False)]
    with pytest.raises(ValueError):
        emit_run(fig1_result, tmp_path, "xml")


def test_png_is_reproducible(tmp_path, fig1_result):
    emit_run(fig1_result, tmp_path / "a")
    emit_run(fig1_result, tmp_path / "b")
    assert (tmp_path / "a/flows.png").read_bytes() == (tmp_path / "b/flows.png").read_bytes()


def test_unwritable_output_raises(tmp_path, fig1_result):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OutputError):
        emit_run(fig1_result, blocker / "sub")


def test_summary_counts_handoffs():
    r = run(load_scenario("handoff_demo"))
    s = summary_dict(r)
    assert s["handoffs"] == {"soft": 1}
    assert s["max_handoff_latency_s"] == pytest.approx(0.015)


def test_comparison_ratio_edge_cases():
    assert ComparisonRow("a", 2.0, 1.0).ratio == 2.0
    assert ComparisonRow("a", 1.0, 0.0).ratio == math.inf
    assert math.isnan(ComparisonRow("a", 0.0, 0.0).ratio)


def test_comparison_csv_round_trip_and_plot_script(tmp_path):
    rows = [ComparisonRow("case_i", 3.5e6, 1.1e6), ComparisonRow("case_ii", 6.6e6, 1.6e6)]
    names = sorted(p.name for p in emit_comparison(rows, tmp_path))
    assert names == ["comparison.csv", "comparison.json", "comparison.png", "plot_comparison.py"]
    assert (tmp_path / "comparison.csv").read_text().splitlines()[0] == ",".join(COMPARISON_HEADER)
    assert read_comparison_csv(tmp_path / "comparison.csv") == rows
    out = tmp_path / "again.png"
    subprocess.run([sys.executable, "plot_comparison.py", "comparison.csv", str(out)],
                   cwd=tmp_path, check=True)
    assert out.read_bytes()[:4] == b"\x89PNG"
