"""Command line interface.

Subcommands::

    batchdc import <case.m> <grid.json> [--stub-reduce]
    batchdc ptdf <grid.json> <out.bin>
    batchdc solve <grid.json> <tasks.jsonl> <out.jsonl> [solver flags]
    batchdc validate <grid.json> [--samples N] [--tol T] [--seed S]
    batchdc bench <grid.json> [batch shape flags] [--baseline oracle]

Exit codes: 0 on success, 1 on invalid input or a failed validation, 2 on
usage errors (argparse's own convention).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from typing import Optional

import numpy as np

from . import bench as bench_mod
from . import factors, io, matpower, oracle
from .errors import BatchDcError, DisconnectedTopology
from .grid import Grid, replace_stub_branches
from .solver import (
    Instrumentation,
    SolveConfig,
    TopologyTask,
    candidate_case_flows,
    solve_batch,
)
from .tree import execute_tree


def main(argv: Optional[list[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BatchDcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="batchdc", description="Batch DC loadflow topology screening"
    )
    sub = parser.add_subparsers(required=True)

    p_import = sub.add_parser("import", help="convert a MATPOWER case to the native format")
    p_import.add_argument("case")
    p_import.add_argument("out")
    p_import.add_argument(
        "--stub-reduce",
        action="store_true",
        help="remove radial appendages behind substations, re-homing their injections",
    )
    p_import.set_defaults(func=cmd_import)

    p_ptdf = sub.add_parser("ptdf", help="dump the base PTDF as binary + JSON sidecar")
    p_ptdf.add_argument("grid")
    p_ptdf.add_argument("out")
    p_ptdf.set_defaults(func=cmd_ptdf)

    p_solve = sub.add_parser("solve", help="solve a JSONL batch of topology tasks")
    p_solve.add_argument("grid")
    p_solve.add_argument("tasks")
    p_solve.add_argument("out")
    p_solve.add_argument("--mode", default="metric_first",
                         choices=("output_first", "metric_first", "symmetric"))
    p_solve.add_argument("--scheduler", default="flat", choices=("flat", "tree"))
    p_solve.add_argument("--topk-per-case", type=int, default=5)
    p_solve.add_argument("--topk-global", type=int, default=10)
    p_solve.add_argument("--workers", type=int, default=1)
    p_solve.add_argument("--islanding-policy", default="penalize",
                         choices=("penalize", "error"))
    p_solve.set_defaults(func=cmd_solve)

    p_val = sub.add_parser("validate", help="cross-check the engine against the oracle")
    p_val.add_argument("grid")
    p_val.add_argument("--samples", type=int, default=10)
    p_val.add_argument("--tol", type=float, default=1e-6)
    p_val.add_argument("--seed", type=int, default=0)
    p_val.set_defaults(func=cmd_validate)

    p_bench = sub.add_parser("bench", help="measure batch throughput")
    p_bench.add_argument("grid")
    p_bench.add_argument("--tasks", type=int, default=20)
    p_bench.add_argument("--ti", type=int, default=16)
    p_bench.add_argument("--splits", type=int, default=3)
    p_bench.add_argument("--disconnections", type=int, default=0)
    p_bench.add_argument("--duration", type=float, default=0.0)
    p_bench.add_argument("--scheduler", default="flat", choices=("flat", "tree"))
    p_bench.add_argument("--mode", default="metric_first",
                         choices=("output_first", "metric_first", "symmetric"))
    p_bench.add_argument("--workers", type=int, default=1)
    p_bench.add_argument("--baseline", default="none", choices=("none", "oracle"))
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.set_defaults(func=cmd_bench)
    return parser


def cmd_import(args: argparse.Namespace) -> int:
    grid = matpower.load_matpower(args.case)
    removed = 0
    if args.stub_reduce:
        before = grid.n_nodes
        grid = replace_stub_branches(grid)
        removed = before - grid.n_nodes
    io.save_grid(grid, args.out)
    print(json.dumps({
        "nodes": grid.n_nodes,
        "branches": grid.n_branches,
        "injections": len(grid.injections),
        "slack": grid.node_ids[grid.slack],
        "removed_nodes": removed,
        "out": args.out,
    }))
    return 0


def cmd_ptdf(args: argparse.Namespace) -> int:
    grid = io.load_grid(args.grid)
    ptdf = factors.compute_ptdf(grid)
    factors.validate_ptdf(ptdf)
    ptdf.values.astype(np.float64).tofile(args.out)
    sidecar = {
        "shape": [int(ptdf.n_rows), int(ptdf.n_cols)],
        "dtype": "float64",
        "order": "row-major",
        "rows": [grid.branches[int(k)].id for k in ptdf.row_branches],
        "cols": [grid.node_ids[i] for i in range(grid.n_nodes)],
    }
    with open(args.out + ".json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=1)
        fh.write("\n")
    print(json.dumps({"out": args.out, "shape": sidecar["shape"]}))
    return 0


def _config_from_args(args: argparse.Namespace) -> SolveConfig:
    return SolveConfig(
        mode=args.mode,
        topk_per_case=getattr(args, "topk_per_case", 5),
        topk_global=getattr(args, "topk_global", 10),
        workers=args.workers,
        islanding_policy=getattr(args, "islanding_policy", "penalize"),
    )


def cmd_solve(args: argparse.Namespace) -> int:
    grid = io.load_grid(args.grid)
    tasks = io.read_tasks(args.tasks, grid)
    config = _config_from_args(args)
    base = factors.prepare_base_ptdf(grid)
    instr = Instrumentation()
    t0 = time.perf_counter()
    if args.scheduler == "tree":
        results = execute_tree(grid, base, tasks, config, instr)
    else:
        results = solve_batch(grid, base, tasks, config, instr)
    elapsed = time.perf_counter() - t0
    io.write_results_path(results, args.out)
    print(json.dumps({
        "tasks": len(tasks),
        "feasible": sum(1 for r in results if r.diagnostics.feasible),
        "wall_time_s": elapsed,
        "loadflows": instr.loadflows,
        "loadflows_per_s": instr.loadflows / elapsed if elapsed > 0 else None,
        "bsdf_applications": instr.bsdf_applications,
        "out": args.out,
    }))
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    grid = io.load_grid(args.grid)
    base = factors.prepare_base_ptdf(grid)
    n_splits = min(3, len(grid.substations))
    tasks = [TopologyTask()]  # identity first: no splits, everything at home
    if args.samples > 0:
        tasks += bench_mod.random_tasks(
            grid, base, args.samples, ti_size=4, n_splits=n_splits, seed=args.seed
        )
    worst = {"deviation": 0.0, "task": None, "case": None, "branch": None}
    mismatches = []
    for ti, task in enumerate(tasks):
        engine = candidate_case_flows(grid, base, task)
        try:
            setup = oracle.materialize(grid, task)
            reference = oracle.oracle_solve(grid, setup)
        except DisconnectedTopology:
            if engine.feasible:
                mismatches.append({"task": ti, "kind": "oracle infeasible, engine not"})
            continue
        if not engine.feasible:
            mismatches.append({"task": ti, "kind": "engine infeasible, oracle not"})
            continue
        if set(engine.islanded_cases) != set(reference.islanded_cases):
            mismatches.append({"task": ti, "kind": "islanded case sets differ"})
            continue
        _track_worst(worst, ti, "n0", engine.n0, reference.n0, engine.row_branches, grid)
        for ci, case in enumerate(grid.contingencies):
            ref_flows = reference.n1[ci]
            eng_flows = engine.n1[ci]
            if ref_flows is None or eng_flows is None:
                continue
            _track_worst(worst, ti, case.id, eng_flows, ref_flows,
                         engine.row_branches, grid)
    passed = not mismatches and worst["deviation"] <= args.tol
    print(json.dumps({
        "samples": len(tasks),
        "tol": args.tol,
        "max_deviation": worst["deviation"],
        "worst": {k: worst[k] for k in ("task", "case", "branch")},
        "mismatches": mismatches,
        "passed": passed,
    }))
    return 0 if passed else 1


def _track_worst(worst, task_idx, case_id, engine_flows, ref_flows, row_branches, grid):
    # engine rows follow row_branches; the oracle is indexed by branch directly
    ref = ref_flows[row_branches, :]
    dev = np.abs(engine_flows - ref)
    pos = np.unravel_index(int(np.argmax(dev)), dev.shape)
    if float(dev[pos]) > worst["deviation"]:
        worst["deviation"] = float(dev[pos])
        worst["task"] = task_idx
        worst["case"] = case_id
        worst["branch"] = grid.branches[int(row_branches[pos[0]])].id


def cmd_bench(args: argparse.Namespace) -> int:
    grid = io.load_grid(args.grid)
    base = factors.prepare_base_ptdf(grid)
    config = SolveConfig(mode=args.mode, workers=args.workers)
    tasks = bench_mod.random_tasks(
        grid,
        base,
        args.tasks,
        ti_size=args.ti,
        n_splits=args.splits,
        seed=args.seed,
        n_disconnections=args.disconnections,
    )
    report = bench_mod.run_bench(
        grid,
        base,
        tasks,
        config,
        scheduler=args.scheduler,
        duration=args.duration,
        baseline=args.baseline,
    )
    print(json.dumps(report))
    return 0


if __name__ == "__main__":
    sys.exit(main())
