"""Command-line front end. Exit codes: 0 success, 1 runtime or oracle failure, 2 input error."""

from __future__ import annotations

import argparse
import json
import os
import random
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Optional, Sequence

import yaml

from .engine.oracle import oracle_rates, random_problem
from .engine.sim import SimResult, run
from .engine.solver import RateProblem, solve_problem
from .results import (ComparisonRow, OutputError, emit_comparison, emit_run, write_sweep_csv)
from .scenario import (Scenario, ScenarioError, derive_single_band, load_scenario, set_path)

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    pass


def _say(args, msg: str) -> None:
    if not args.quiet:
        print(msg)


def _load(ref: str, seed: Optional[int]) -> Scenario:
    try:
        s = load_scenario(ref)
    except FileNotFoundError as exc:
        raise InputError(str(exc)) from None
    except ScenarioError as exc:
        raise InputError(f"{ref}:\n{exc}") from None
    if seed is not None:
        s = s.model_copy(update={"sim": s.sim.model_copy(update={"seed": seed})})
    return s


def _run_one(s: Scenario) -> SimResult:
    return run(s)


def _pool_map(fn, items: list, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))


def cmd_validate(args) -> int:
    s = _load(args.scenario, args.seed)
    _say(args, f"{args.scenario}: ok ({s.name}, {s.mode} band, {len(s.nodes) + 1} nodes, "
               f"{len(s.traffic.flows)} flows)")
    return EXIT_OK


def cmd_run(args) -> int:
    s = _load(args.scenario, args.seed)
    r = run(s)
    emit_run(r, Path(args.out), args.format, plots=not args.no_plots)
    _say(args, f"{s.name}: average throughput {r.report.average_bps / 1e6:.6f} Mbps "
               f"over {r.report.window} with N={r.report.node_count} -> {args.out}")
    return EXIT_OK


def compare_rows(scenarios: list[Scenario], policy: Optional[str], jobs: int
                 ) -> tuple[list[ComparisonRow], list[tuple[SimResult, SimResult]]]:
    for s in scenarios:
        if s.mode != "dual":
            raise InputError(f"{s.name}: compare needs a dual-band scenario")
    jobs_in = []
    for s in scenarios:
        jobs_in += [s, derive_single_band(s, policy)]
    results = _pool_map(_run_one, jobs_in, jobs)
    rows, pairs = [], []
    for i, s in enumerate(scenarios):
        dual, single = results[2 * i], results[2 * i + 1]
        rows.append(ComparisonRow(s.name, dual.report.average_bps, single.report.average_bps))
        pairs.append((dual, single))
    return rows, pairs


def cmd_compare(args) -> int:
    scenarios = [_load(ref, args.seed) for ref in args.scenario]
    rows, pairs = compare_rows(scenarios, args.policy, args.jobs)
    out = Path(args.out)
    plots = not args.no_plots
    for s, (dual, single) in zip(scenarios, pairs):
        base = out / s.name if len(scenarios) > 1 else out
        emit_run(dual, base / "dual", args.format, plots)
        emit_run(single, base / "single", args.format, plots)
    emit_comparison(rows, out, args.format, plots)
    for row in rows:
        _say(args, f"{row.case}: dual {row.dual_avg_bps / 1e6:.6f} Mbps, "
                   f"single {row.single_avg_bps / 1e6:.6f} Mbps, ratio {row.ratio:.4f}")
    return EXIT_OK


def _parse_values(text: str) -> list:
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            out.append(yaml.safe_load(part))
        except yaml.YAMLError:
            raise InputError(f"cannot parse sweep value {part!r}") from None
    if not out:
        raise InputError("sweep needs at least one value")
    return out


def cmd_sweep(args) -> int:
    base = _load(args.scenario, args.seed)
    values = _parse_values(args.values)
    variants = []
    for v in values:
        try:
            variants.append(set_path(base, args.param, v))
        except ScenarioError as exc:
            raise InputError(f"{args.param}={v!r}:\n{exc}") from None
    results = _pool_map(_run_one, variants, args.jobs)
    out = Path(args.out)
    rows = []
    for v, r in zip(values, results):
        emit_run(r, out / f"{args.param}={v}", args.format, plots=False)
        rows.append((v, r.report.average_bps))
        _say(args, f"{args.param}={v}: {r.report.average_bps / 1e6:.6f} Mbps")
    write_sweep_csv(args.param, rows, out / "sweep.csv")
    if args.format == "all" and not args.no_plots and all(isinstance(v, (int, float)) for v in values):
        from .plotting import plot_sweep
        plot_sweep(args.param, rows, out / "sweep.png")
    return EXIT_OK


Solver = Callable[[RateProblem], object]


def _close(a: float, b: float, rel: float) -> bool:
    return abs(a - b) <= rel * max(abs(a), abs(b), 1.0)


def oracle_check(seeds: int, max_nodes: int = 6, max_flows: int = 6, solver: Solver = solve_problem,
                 first_seed: int = 0, rel: float = 1e-6) -> list[tuple[int, RateProblem, dict, dict]]:
    """Compare ``solver`` to the brute-force oracle on random problems; returns mismatches."""
    bad = []
    for seed in range(first_seed, first_seed + seeds):
        problem = random_problem(random.Random(seed), max_nodes, max_flows)
        got = solver(problem).rates
        want = {k: float(v) for k, v in oracle_rates(problem).items()}
        if set(got) != set(want) or any(not _close(got[k], want[k], rel) for k in want):
            bad.append((seed, problem, dict(got), want))
    return bad


def cmd_oracle_check(args, solver: Solver = solve_problem) -> int:
    if args.max_nodes < 1 or args.max_flows < 0 or args.seeds < 0:
        raise InputError("need --max-nodes >= 1, --max-flows >= 0, --seeds >= 0")
    if args.max_nodes > 6 or args.max_flows > 6:
        raise InputError("the brute-force oracle is limited to 6 nodes and 6 flows")
    bad = oracle_check(args.seeds, args.max_nodes, args.max_flows, solver, args.first_seed)
    if not bad:
        _say(args, f"oracle-check: {args.seeds} random problems, solver matches oracle")
        return EXIT_OK
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for seed, problem, got, want in bad:
        path = out / f"oracle_mismatch_seed{seed}.json"
        path.write_text(json.dumps({"seed": seed, "problem": problem.to_dict(),
                                    "solver": got, "oracle": want}, indent=2, sort_keys=True))
        print(f"seed {seed}: solver {got} != oracle {want}; repro in {path}", file=sys.stderr)
    return EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="out", help="output directory (default: ./out)")
    common.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    common.add_argument("--format", choices=("csv", "summary", "all"), default="all")
    common.add_argument("--quiet", action="store_true", help="print nothing on success")
    common.add_argument("--no-plots", action="store_true", help="skip PNG rendering")
    common.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                        help="parallel simulations for compare and sweep")

    p = argparse.ArgumentParser(prog="dualmesh", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", parents=[common], help="simulate one scenario")
    r.add_argument("scenario", help="scenario file, or a bundled name such as fig1_dual")
    c = sub.add_parser("compare", parents=[common], help="dual band against its single-band twin")
    c.add_argument("scenario", nargs="+")
    c.add_argument("--policy", choices=("shared", "assigned"), default=None,
                   help="single-band channel policy (default: the scenario's benchmark_channels)")
    s = sub.add_parser("sweep", parents=[common], help="vary one parameter by dotted path")
    s.add_argument("scenario")
    s.add_argument("--param", required=True, help="dotted path, e.g. protocol.handoff.T")
    s.add_argument("--values", required=True, help="comma-separated values, e.g. 0.5,1,2")
    o = sub.add_parser("oracle-check", parents=[common], help="solver against the brute-force oracle")
    o.add_argument("--seeds", type=int, default=100)
    o.add_argument("--first-seed", type=int, default=0)
    o.add_argument("--max-nodes", type=int, default=6)
    o.add_argument("--max-flows", type=int, default=6)
    v = sub.add_parser("validate", parents=[common], help="parse and check a scenario")
    v.add_argument("scenario")
    return p


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "sweep": cmd_sweep,
            "oracle-check": cmd_oracle_check, "validate": cmd_validate}


def main(argv: Optional[Sequence[str]] = None, solver: Optional[Solver] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        if args.command == "oracle-check" and solver is not None:
            return cmd_oracle_check(args, solver)
        return COMMANDS[args.command](args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OutputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except Exception as exc:  # runtime failure inside a simulation
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
