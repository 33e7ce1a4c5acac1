"""Throughput measurement: engine vs. refactorization baseline.

Generates reproducible random task batches on a grid, times the batch solve,
and optionally times the explicit-refactorization oracle on a small sample of
the same work to report a per-loadflow speedup.  One "loadflow" is one
evaluated flow vector: a candidate under N-0 or under one feasible
contingency case.
"""

from __future__ import annotations

import time
from typing import Any, Optional, Sequence

import numpy as np

from . import factors, oracle
from .errors import DegenerateSplit, IslandingError, SingularSplit, ValidationError
from .factors import PtdfMatrix
from .grid import Grid
from .solver import (
    Instrumentation,
    SolveConfig,
    SplitAction,
    TopologyTask,
    solve_batch,
)
from .tree import execute_tree

_MAX_DRAWS = 500


def random_tasks(
    grid: Grid,
    base: PtdfMatrix,
    n_tasks: int,
    ti_size: int,
    n_splits: int,
    seed: int,
    n_disconnections: int = 0,
) -> list[TopologyTask]:
    """Draw feasible random tasks: splits, optional disconnections, candidate bits.

    Assignments that island the base grid (singular or degenerate splits,
    islanding disconnections) are rejected and redrawn, so every returned
    task is solvable at N-0.  Fully deterministic for a given seed.
    """
    rng = np.random.default_rng(seed)
    eligible = [
        i for i, sub in enumerate(grid.substations) if len(sub.branch_elements) >= 2
    ]
    n_slots = len(grid.injection_slots)
    tasks = []
    for _ in range(n_tasks):
        for _attempt in range(_MAX_DRAWS):
            k = min(n_splits, len(eligible))
            chosen = sorted(
                int(c) for c in rng.choice(len(eligible), size=k, replace=False)
            ) if k else []
            splits = []
            for c in chosen:
                si = eligible[c]
                n_el = len(grid.substations[si].branch_elements)
                bits = rng.integers(0, 2, size=n_el).astype(bool)
                while not bits.any():
                    bits = rng.integers(0, 2, size=n_el).astype(bool)
                splits.append(SplitAction(substation=si, assignment=tuple(bits.tolist())))
            if n_disconnections:
                discos = tuple(
                    int(d)
                    for d in rng.choice(
                        grid.n_branches, size=n_disconnections, replace=False
                    )
                )
            else:
                discos = ()
            injection_sets = tuple(
                tuple(bool(b) for b in rng.integers(0, 2, size=n_slots))
                for _ in range(ti_size)
            )
            task = TopologyTask(
                splits=tuple(splits),
                disconnections=discos,
                injection_sets=injection_sets,
            )
            if _feasible_at_n0(grid, base, task):
                tasks.append(task)
                break
        else:
            raise RuntimeError("could not draw a feasible task; grid too fragile?")
    return tasks


def _feasible_at_n0(grid: Grid, base: PtdfMatrix, task: TopologyTask) -> bool:
    try:
        ptdf = base
        for sp in sorted(task.splits, key=lambda s: (s.substation, s.assignment)):
            update = factors.compute_bsdf(
                ptdf, grid, grid.substations[sp.substation], sp.assignment
            )
            ptdf = factors.apply_bsdf(ptdf, update)
        if task.disconnections:
            factors.compute_modf(ptdf, task.disconnections)
    except (SingularSplit, DegenerateSplit, IslandingError):
        return False
    except ValidationError:
        return False  # e.g. disconnection endpoint folded away on this base
    return True


def run_bench(
    grid: Grid,
    base: PtdfMatrix,
    tasks: Sequence[TopologyTask],
    config: Optional[SolveConfig] = None,
    scheduler: str = "flat",
    duration: float = 0.0,
    baseline: str = "none",
    baseline_budget_s: float = 20.0,
) -> dict[str, Any]:
    """Time the batch solve; optionally also the oracle baseline.

    With ``duration > 0`` the batch is re-solved in a loop until that many
    seconds have elapsed (at least one pass always runs).  The oracle
    baseline re-materializes and re-factorizes per candidate, which is
    exactly the work the engine's updates avoid.
    """
    config = config or SolveConfig()
    passes = 0
    instr = Instrumentation()
    t0 = time.perf_counter()
    while True:
        if scheduler == "tree":
            execute_tree(grid, base, tasks, config, instr)
        else:
            solve_batch(grid, base, tasks, config, instr)
        passes += 1
        elapsed = time.perf_counter() - t0
        if elapsed >= duration:
            break
    report: dict[str, Any] = {
        "scheduler": scheduler,
        "mode": config.mode,
        "tasks": len(tasks),
        "passes": passes,
        "wall_time_s": elapsed,
        "loadflows": instr.loadflows,
        "loadflows_per_s": instr.loadflows / elapsed if elapsed > 0 else float("inf"),
        "tasks_per_s": instr.tasks_solved / elapsed if elapsed > 0 else float("inf"),
        "bsdf_applications": instr.bsdf_applications,
        "peak_live_ptdfs": instr.peak_live_ptdfs,
    }
    if baseline == "oracle":
        report["baseline"] = _oracle_baseline(grid, tasks, baseline_budget_s)
        base_rate = report["baseline"]["loadflows_per_s"]
        report["speedup"] = (
            report["loadflows_per_s"] / base_rate if base_rate > 0 else float("inf")
        )
    return report


def _oracle_baseline(
    grid: Grid, tasks: Sequence[TopologyTask], budget_s: float
) -> dict[str, Any]:
    """Refactorization timing: one factorization per case topology per task.

    All of a task's candidates ride along as right-hand sides, so this is the
    strongest conventional strategy, not a strawman.  A loadflow is one flow
    vector (case, candidate), the same unit the engine counts.
    """
    loadflows = 0
    solved = 0
    t0 = time.perf_counter()
    for task in tasks:
        setup = oracle.materialize(grid, task)
        result = oracle.oracle_solve(grid, setup)
        n_t = setup.powers.shape[1]
        loadflows += (1 + sum(1 for f in result.n1 if f is not None)) * n_t
        solved += 1
        elapsed = time.perf_counter() - t0
        if elapsed >= budget_s:
            break
    elapsed = time.perf_counter() - t0
    return {
        "tasks": solved,
        "wall_time_s": elapsed,
        "loadflows": loadflows,
        "loadflows_per_s": loadflows / elapsed if elapsed > 0 else 0.0,
    }
