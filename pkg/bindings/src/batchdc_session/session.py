"""Session-based array interface to the batch solver.

Opening a session loads the grid and prepares the reduced base PTDF once.
The session is immutable after that, so an optimization loop can hold it for
its whole lifetime and stream candidate batches against it; nothing is ever
factorized or folded again, and any number of threads may solve against the
same session at the same time.

Batches are plain numpy arrays rather than task objects:

    splits          (B, S, E) bool   move bits per substation; an all-False
                                     row leaves that substation unsplit
    disconnections  (B, D)    int    branch indices, -1 marks an empty slot
    injection_sets  (B, T, K) bool   K movable-injection bits per candidate

B is the number of tasks, S the substation count, E the widest substation
(shorter substations are padded with False), T the candidates per task and
K the movable injection slot count.  S, E and K are published on the session
so callers can allocate buffers without touching grid internals.

Results mirror the CLI solver line for line: the per-task report documents
are the exact dicts `batchdc.cli solve` serializes, so a batch solved through
a session compares bit-for-bit with the CLI output on the same tasks.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

from batchdc import (
    Grid,
    PtdfMatrix,
    SolveConfig,
    SplitAction,
    TopologyTask,
    ValidationError,
    grid_from_dict,
    load_grid,
    prepare_base_ptdf,
)
from batchdc import solve_batch as _solve_tasks
from batchdc.io import result_to_dict

__all__ = ["SolverSession", "session_open", "solve_batch"]

GridSource = Union[str, Path, dict, Grid]


@dataclass(frozen=True)
class SolverSession:
    """A grid pinned together with its prepared base PTDF and solve config.

    Instances are frozen; solve_batch never writes into one, which is what
    makes concurrent solves against a shared session safe.
    """

    grid: Grid
    base: PtdfMatrix
    config: SolveConfig
    element_counts: tuple[int, ...]

    @property
    def n_nodes(self) -> int:
        return len(self.grid.node_ids)

    @property
    def n_branches(self) -> int:
        return len(self.grid.branches)

    @property
    def n_cases(self) -> int:
        return len(self.grid.contingencies)

    @property
    def n_substations(self) -> int:
        return len(self.grid.substations)

    @property
    def n_slots(self) -> int:
        return len(self.grid.injection_slots)

    @property
    def split_shape(self) -> tuple[int, int]:
        """Per-task (S, E) layout expected in the splits array."""
        return (len(self.element_counts), max(self.element_counts, default=0))


def session_open(grid: GridSource, config: Optional[SolveConfig] = None) -> SolverSession:
    """Load a grid and prepare its base PTDF once, returning a reusable session.

    `grid` may be a path to a native grid file, an in-memory grid document
    (the same dict shape the native format holds), or an already built Grid.
    A path or document that fails to load raises exactly what the native
    loader raises.
    """
    if isinstance(grid, (str, Path)):
        loaded = load_grid(str(grid))
    elif isinstance(grid, dict):
        loaded = grid_from_dict(grid)
    elif isinstance(grid, Grid):
        loaded = grid
    else:
        raise ValidationError(f"unsupported grid source: {type(grid).__name__}")
    return SolverSession(
        grid=loaded,
        base=prepare_base_ptdf(loaded),
        config=config if config is not None else SolveConfig(),
        element_counts=tuple(len(s.branch_elements) for s in loaded.substations),
    )


def solve_batch(
    session: SolverSession,
    splits: Optional[Any],
    disconnections: Optional[Any],
    injection_sets: Any,
) -> dict[str, Any]:
    """Solve one batch of candidate topologies against an open session.

    All shape and index validation happens up front; a malformed batch
    raises before any task is decoded or solved.  Returns a dict with

        metrics         (B,) float64, NaN where a task is infeasible
        best_injection  (B,) int64, -1 where a task is infeasible
        feasible        (B,) bool
        reports         list of B dicts, the documents the CLI writes

    The heavy kernels underneath are numpy calls that drop the interpreter
    lock, so concurrent calls on one session overlap on multicore hosts.
    """
    inj = _checked_bits(injection_sets, "injection_sets", 3)
    n_tasks, n_candidates, n_bits = inj.shape
    if n_bits != session.n_slots:
        raise ValidationError(
            f"injection_sets has {n_bits} slot bits per row, grid has {session.n_slots}"
        )
    if n_candidates == 0:
        raise ValidationError("injection_sets needs at least one candidate row per task")

    sub_count, width = session.split_shape
    if splits is None:
        move_bits = np.zeros((n_tasks, sub_count, width), dtype=bool)
    else:
        move_bits = _checked_bits(splits, "splits", 3)
        if move_bits.shape != (n_tasks, sub_count, width):
            raise ValidationError(
                f"splits shape {move_bits.shape} does not match "
                f"({n_tasks}, {sub_count}, {width})"
            )
    for si, count in enumerate(session.element_counts):
        if count < width and move_bits[:, si, count:].any():
            raise ValidationError(
                f"splits sets bits past the {count} elements of substation {si}"
            )

    if disconnections is None:
        outages = np.empty((n_tasks, 0), dtype=np.int64)
    else:
        outages = np.ascontiguousarray(disconnections)
        if outages.dtype.kind not in "iu":
            raise ValidationError(
                f"disconnections must be integer branch indices, got {outages.dtype}"
            )
        if outages.ndim != 2 or outages.shape[0] != n_tasks:
            raise ValidationError(
                f"disconnections shape {outages.shape} does not match ({n_tasks}, D)"
            )
        outages = outages.astype(np.int64, copy=False)
        if outages.size and (outages.min() < -1 or outages.max() >= session.n_branches):
            raise ValidationError(
                f"disconnection indices must be -1 or in [0, {session.n_branches})"
            )

    tasks = [
        _decode_task(session, move_bits[b], outages[b], inj[b]) for b in range(n_tasks)
    ]
    results = _solve_tasks(session.grid, session.base, tasks, session.config)
    metrics = np.array(
        [r.metric if r.metric is not None else np.nan for r in results], dtype=np.float64
    )
    best = np.array(
        [r.best_injection if r.best_injection is not None else -1 for r in results],
        dtype=np.int64,
    )
    feasible = np.array([r.diagnostics.feasible for r in results], dtype=bool)
    return {
        "metrics": metrics,
        "best_injection": best,
        "feasible": feasible,
        "reports": [result_to_dict(r) for r in results],
    }


def _checked_bits(arr: Any, name: str, ndim: int) -> np.ndarray:
    a = np.ascontiguousarray(arr)
    if a.dtype.kind not in "bui":
        raise ValidationError(f"{name} must be boolean (or 0/1 integer), got {a.dtype}")
    if a.ndim != ndim:
        raise ValidationError(f"{name} must be {ndim}-dimensional, got shape {a.shape}")
    return a.astype(bool, copy=False)


def _decode_task(
    session: SolverSession,
    move_bits: np.ndarray,
    outage_row: np.ndarray,
    candidate_rows: np.ndarray,
) -> TopologyTask:
    actions = []
    for si, count in enumerate(session.element_counts):
        bits = move_bits[si, :count]
        if bits.any():
            actions.append(
                SplitAction(substation=si, assignment=tuple(bool(b) for b in bits))
            )
    kept = outage_row[outage_row >= 0]
    return TopologyTask(
        splits=tuple(actions),
        disconnections=tuple(int(k) for k in kept),
        injection_sets=tuple(tuple(bool(b) for b in row) for row in candidate_rows),
    )
