"""Batch evaluation of topology tasks: splits, disconnections, injection bruteforce.

A :class:`TopologyTask` bundles one branch-topology decision (busbar splits
plus permanent disconnections) with a set of injection-assignment candidates.
Solving a task means:

1. apply the splits to the base PTDF (rank-one updates, canonical order),
2. apply the disconnections (one MODF block update, or chained LODF updates),
3. precompute one LODF column / MODF matrix per branch contingency,
4. for every injection candidate, evaluate base-case and all contingency
   flows through sparse column combinations, score them with :func:`agg_m`,
5. return the best candidate, its sparse report (:func:`agg_i`) and
   diagnostics.

The three evaluation modes ("output_first", "metric_first", "symmetric")
trade memory against recomputation but share every numerical code path, so
their results are identical down to the last bit.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from . import factors
from .errors import (
    DegenerateSplit,
    IslandingError,
    SingularSplit,
    ValidationError,
)
from .factors import PtdfMatrix
from .grid import INJECTION, MULTI_BRANCH, SINGLE_BRANCH, Grid

MODES = ("output_first", "metric_first", "symmetric")
ISLANDING_POLICIES = ("penalize", "error")
MULTI_OUTAGE_METHODS = ("modf", "sequential")


@dataclass(frozen=True)
class SplitAction:
    """Split one substation with the given branch-element assignment bits."""

    substation: int
    assignment: tuple[bool, ...]


@dataclass(frozen=True)
class TopologyTask:
    """One branch topology plus the injection candidates to bruteforce over it."""

    splits: tuple[SplitAction, ...] = ()
    disconnections: tuple[int, ...] = ()
    injection_sets: tuple[tuple[bool, ...], ...] = ((),)


@dataclass(frozen=True)
class SolveConfig:
    """Solver behaviour knobs; defaults are safe for screening runs."""

    mode: str = "metric_first"
    topk_per_case: int = 5
    topk_global: int = 10
    workers: int = 1
    islanding_policy: str = "penalize"
    islanding_penalty: float = 10.0
    multi_outage_method: str = "modf"
    max_simultaneous_outages: int = 8
    max_batch: int = 0  # tasks per parallel wave; 0 sizes waves by worker count

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ValidationError(f"unknown mode {self.mode!r}")
        if self.islanding_policy not in ISLANDING_POLICIES:
            raise ValidationError(f"unknown islanding policy {self.islanding_policy!r}")
        if self.multi_outage_method not in MULTI_OUTAGE_METHODS:
            raise ValidationError(
                f"unknown multi-outage method {self.multi_outage_method!r}"
            )
        if self.topk_per_case < 1 or self.topk_global < 1:
            raise ValidationError("top-k limits must be >= 1")
        if self.workers < 1:
            raise ValidationError("workers must be >= 1")
        if self.max_simultaneous_outages < 1:
            raise ValidationError("max_simultaneous_outages must be >= 1")
        if not self.islanding_penalty > 0.0:
            raise ValidationError("islanding penalty must be > 0")


@dataclass(frozen=True)
class SparseReport:
    """Worst loadings of the winning candidate.

    ``n0_worst``: (branch id, flow MW, relative load) for the base case.
    ``n1_worst``: (case id, branch id, flow MW, relative load) across all
    feasible contingencies.  Both sorted by relative load descending, ties by
    (case order, branch order) ascending.
    """

    n0_worst: tuple[tuple[str, float, float], ...]
    n1_worst: tuple[tuple[str, str, float, float], ...]


@dataclass(frozen=True)
class TaskDiagnostics:
    feasible: bool
    reason: Optional[str] = None
    islanded_cases: tuple[str, ...] = ()


@dataclass(frozen=True)
class SolveResult:
    metric: Optional[float]
    best_injection: Optional[int]
    report: Optional[SparseReport]
    diagnostics: TaskDiagnostics


class Instrumentation:
    """Thread-safe counters for scheduler comparisons and benchmarks."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.bsdf_applications = 0
        self.tasks_solved = 0
        self.loadflows = 0
        self.peak_live_ptdfs = 0

    def count_bsdf(self, n: int = 1) -> None:
        with self._lock:
            self.bsdf_applications += n

    def count_task(self, loadflows: int) -> None:
        with self._lock:
            self.tasks_solved += 1
            self.loadflows += loadflows

    def note_live_ptdfs(self, n: int) -> None:
        with self._lock:
            if n > self.peak_live_ptdfs:
                self.peak_live_ptdfs = n


def canonicalize_task(grid: Grid, task: TopologyTask) -> TopologyTask:
    """Validate a task and bring it to canonical form.

    Splits with an all-False assignment are no-ops and are dropped; the rest
    are sorted by (substation index, assignment bits).  Every scheduler and
    mode consumes canonical tasks, which is what makes their floating-point
    work identical.
    """
    seen_subs = set()
    splits = []
    for sp in task.splits:
        if not 0 <= sp.substation < len(grid.substations):
            raise ValidationError(f"substation index {sp.substation} out of range")
        if sp.substation in seen_subs:
            raise ValidationError(f"substation {sp.substation} split twice in one task")
        seen_subs.add(sp.substation)
        sub = grid.substations[sp.substation]
        if len(sp.assignment) != len(sub.branch_elements):
            raise ValidationError(
                f"substation {sp.substation}: assignment has {len(sp.assignment)} bits, "
                f"expected {len(sub.branch_elements)}"
            )
        if any(sp.assignment):
            splits.append(SplitAction(sp.substation, tuple(bool(b) for b in sp.assignment)))
    splits.sort(key=lambda sp: (sp.substation, sp.assignment))

    if len(set(task.disconnections)) != len(task.disconnections):
        raise ValidationError("duplicate branch in disconnections")
    for k in task.disconnections:
        if not 0 <= k < grid.n_branches:
            raise ValidationError(f"disconnection branch {k} out of range")

    n_slots = len(grid.injection_slots)
    if not task.injection_sets:
        raise ValidationError("task needs at least one injection set")
    rows = []
    for row in task.injection_sets:
        if len(row) == 0 and n_slots > 0:
            rows.append((False,) * n_slots)  # shortcut for "everything stays home"
            continue
        if len(row) != n_slots:
            raise ValidationError(
                f"injection set has {len(row)} bits, expected {n_slots}"
            )
        rows.append(tuple(bool(b) for b in row))
    return TopologyTask(
        splits=tuple(splits),
        disconnections=tuple(task.disconnections),
        injection_sets=tuple(rows),
    )


def dedupe_symmetric_injections(
    grid: Grid, task: TopologyTask
) -> tuple[TopologyTask, tuple[int, ...]]:
    """Drop injection candidates that are electrically interchangeable.

    Two candidates are equivalent when, per split substation and per distinct
    setpoint value, they move the same number of injections.  Bits of
    substations the task does not split never matter.  Keeps the first
    candidate of each class; the returned index tuple maps surviving
    positions back to positions in the original task.
    """
    canon = canonicalize_task(grid, task)
    active = {sp.substation for sp in canon.splits}
    slots = grid.injection_slots
    groups: dict[tuple[int, float], list[int]] = {}
    for s, (si, j) in enumerate(slots):
        if si in active:
            groups.setdefault((si, grid.injections[j].setpoint), []).append(s)
    group_list = sorted(groups.items())
    seen: dict[tuple[int, ...], int] = {}
    kept_rows = []
    kept_idx = []
    for idx, row in enumerate(canon.injection_sets):
        key = tuple(sum(1 for s in members if row[s]) for _, members in group_list)
        if key in seen:
            continue
        seen[key] = idx
        kept_rows.append(row)
        kept_idx.append(idx)
    return (
        replace(canon, injection_sets=tuple(kept_rows)),
        tuple(kept_idx),
    )


def agg_m(
    n0: np.ndarray,
    n1: Iterable[Optional[np.ndarray]],
    ratings: np.ndarray,
    islanding_penalty: float = 0.0,
) -> float:
    """Scalar screening metric: worst |flow|/rating over N-0 and all cases.

    ``None`` entries in ``n1`` stand for islanded (infeasible) cases and
    contribute ``islanding_penalty`` instead of a loading.
    """
    worst = float(np.max(np.abs(n0) / ratings)) if len(n0) else 0.0
    for flows in n1:
        if flows is None:
            worst = max(worst, islanding_penalty)
        else:
            worst = max(worst, float(np.max(np.abs(flows) / ratings)))
    return worst


def agg_i(
    n0: np.ndarray,
    n1: Sequence[Optional[np.ndarray]],
    ratings: np.ndarray,
    branch_ids: Sequence[str],
    case_ids: Sequence[str],
    topk_per_case: int,
    topk_global: int,
    n0_mask: Optional[np.ndarray] = None,
    case_masks: Optional[Sequence[Optional[np.ndarray]]] = None,
) -> SparseReport:
    """Sparse report of the worst loadings; see :class:`SparseReport`.

    Position order in the flow vectors breaks ties, so callers must pass rows
    in ascending branch order.  Masks exclude rows (e.g. outaged branches)
    from the report without touching the metric.
    """
    entries = []
    for ci, flows in enumerate(n1):
        if flows is None:
            continue
        mask = case_masks[ci] if case_masks is not None else None
        for pos, rel, flow in _top_rows(flows, ratings, mask, topk_per_case):
            entries.append((ci, pos, rel, flow))
    n1_entries = _merge_entries(entries, case_ids, branch_ids, topk_global)
    n0_entries = tuple(
        (branch_ids[pos], flow, rel)
        for pos, rel, flow in _top_rows(n0, ratings, n0_mask, topk_global)
    )
    return SparseReport(n0_worst=n0_entries, n1_worst=n1_entries)


def _top_rows(
    flows: np.ndarray, ratings: np.ndarray, mask: Optional[np.ndarray], k: int
) -> list[tuple[int, float, float]]:
    """Top-k rows by |flow|/rating as (position, rel, flow).

    Selection uses a stable sort, so exact ties fall to the lower position.
    """
    idx = np.flatnonzero(mask) if mask is not None else np.arange(len(flows))
    if len(idx) == 0:
        return []
    rel = np.abs(flows[idx]) / ratings[idx]
    order = np.argsort(-rel, kind="stable")[:k]
    return [(int(idx[o]), float(rel[o]), float(flows[idx[o]])) for o in order]


def _merge_entries(
    entries: list[tuple[int, int, float, float]],
    case_ids: Sequence[str],
    branch_ids: Sequence[str],
    k: int,
) -> tuple[tuple[str, str, float, float], ...]:
    """Global top-k over per-case pools; ties by (case, position) ascending."""
    if not entries:
        return ()
    arr_rel = np.array([e[2] for e in entries])
    arr_case = np.array([e[0] for e in entries])
    arr_pos = np.array([e[1] for e in entries])
    order = np.lexsort((arr_pos, arr_case, -arr_rel))[:k]
    return tuple(
        (case_ids[entries[o][0]], branch_ids[entries[o][1]], entries[o][3], entries[o][2])
        for o in order
    )


@dataclass
class _CaseEval:
    """Per-contingency data precomputed in the branch stage."""

    order: int
    case_id: str
    kind: str
    feasible: bool
    rows: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    lodf: Optional[np.ndarray] = None        # (R,) for single-branch cases
    modf: Optional[np.ndarray] = None        # (R, m) for multi-branch cases
    inj_slot: Optional[int] = None           # movable injection: slot index
    inj_col: int = -1                        # immovable injection: fixed column
    inj_setpoint: float = 0.0
    report_mask: Optional[np.ndarray] = None  # over monitored rows


@dataclass
class _BranchContext:
    """Everything the injection stage needs after the branch topology is fixed."""

    ptdf: PtdfMatrix
    feasible: bool
    reason: Optional[str] = None
    islanded: tuple[str, ...] = ()
    static_flows: Optional[np.ndarray] = None   # (R,)
    cases: list[_CaseEval] = field(default_factory=list)
    mon_rows: Optional[np.ndarray] = None       # (M,) rows of monitored branches
    mon_ratings: Optional[np.ndarray] = None    # (M,)
    mon_branches: Optional[np.ndarray] = None   # (M,) branch indices
    mon_identity: bool = False                  # monitored rows are 0..R-1 in order
    base_mask: Optional[np.ndarray] = None      # (M,) True where reportable at N-0
    slot_col_a: Optional[np.ndarray] = None     # (S,) column when bit is False
    slot_col_b: Optional[np.ndarray] = None     # (S,) column when bit is True
    slot_setpoints: Optional[np.ndarray] = None
    # feasible single-branch cases, stacked for block evaluation
    single_orders: Optional[np.ndarray] = None  # (C,) indices into cases
    single_rows: Optional[np.ndarray] = None    # (C,) outaged rows
    single_lodf: Optional[np.ndarray] = None    # (R, C) outage columns
    single_scale: Optional[np.ndarray] = None   # (C,) max |lodf|/rating, cached


def _apply_splits(
    grid: Grid,
    base: PtdfMatrix,
    splits: Sequence[SplitAction],
    instr: Optional[Instrumentation],
) -> PtdfMatrix:
    ptdf = base
    for sp in splits:
        update = factors.compute_bsdf(
            ptdf, grid, grid.substations[sp.substation], sp.assignment
        )
        ptdf = factors.apply_bsdf(ptdf, update)
        if instr is not None:
            instr.count_bsdf()
            instr.note_live_ptdfs(2)  # base plus the current end of the chain
    return ptdf


def _branch_stage(
    grid: Grid,
    split_ptdf: PtdfMatrix,
    task: TopologyTask,
    config: SolveConfig,
) -> _BranchContext:
    """Disconnections, contingency factors and static flows for one fixed topology."""
    ptdf = split_ptdf
    if task.disconnections:
        if len(task.disconnections) > config.max_simultaneous_outages:
            raise ValidationError(
                f"{len(task.disconnections)} disconnections exceed the cap of "
                f"{config.max_simultaneous_outages}"
            )
        try:
            if config.multi_outage_method == "sequential":
                for k in task.disconnections:
                    col = factors.lodf_column(ptdf, k)
                    ptdf = factors.apply_outage_to_ptdf(ptdf, col, k)
            else:
                modf = factors.compute_modf(ptdf, task.disconnections)
                ptdf = factors.apply_modf_to_ptdf(ptdf, modf)
        except IslandingError as exc:
            return _BranchContext(
                ptdf=ptdf, feasible=False, reason=f"disconnections island the grid: {exc}"
            )

    mon = np.array(grid.monitored, dtype=np.int64)
    mon_rows = ptdf.branch_rows[mon]
    if np.any(mon_rows < 0):
        raise ValidationError("monitored branches must all have retained PTDF rows")
    ctx = _BranchContext(
        ptdf=ptdf,
        feasible=True,
        mon_rows=mon_rows,
        mon_ratings=grid.ratings[mon],
        mon_branches=mon,
        mon_identity=len(mon_rows) == ptdf.n_rows
        and bool(np.array_equal(mon_rows, np.arange(ptdf.n_rows))),
        cases=[],
    )

    # branch index -> position among monitored rows, -1 if unmonitored
    mon_pos = np.full(grid.n_branches, -1, dtype=np.int64)
    mon_pos[mon] = np.arange(len(mon))
    ctx.base_mask = np.ones(len(mon), dtype=bool)
    for k in task.disconnections:
        if mon_pos[k] >= 0:
            ctx.base_mask[mon_pos[k]] = False

    def case_mask(branches):
        m = ctx.base_mask.copy()
        for k in branches:
            if mon_pos[k] >= 0:
                m[mon_pos[k]] = False
        return m

    islanded: list[str] = []
    singles: list[_CaseEval] = []
    for order, case in enumerate(grid.contingencies):
        ce = _CaseEval(order=order, case_id=case.id, kind=case.kind, feasible=True)
        if case.kind == SINGLE_BRANCH:
            k = case.branches[0]
            ce.rows = np.array([ptdf.row_of(k)], dtype=np.int64)
            singles.append(ce)
            ctx.cases.append(ce)
            continue  # factors and mask land in the block below
        if case.kind == MULTI_BRANCH:
            try:
                modf = factors.compute_modf(ptdf, case.branches)
                ce.rows = modf.rows
                ce.modf = modf.values
            except IslandingError:
                ce.feasible = False
        else:
            j = case.injection
            ce.inj_setpoint = grid.injections[j].setpoint
            slot = _slot_of_injection(grid, j)
            if slot is not None:
                ce.inj_slot = slot
            else:
                col = int(ptdf.node_cols[grid.injections[j].node])
                if col < 0:
                    raise ValidationError(
                        f"injection contingency {case.id}: node column folded"
                    )
                ce.inj_col = col
        if ce.feasible:
            ce.report_mask = case_mask(case.branches)
        else:
            islanded.append(case.id)
        ctx.cases.append(ce)

    if singles:
        # one sweep builds every single-outage column; same arithmetic as
        # factors.lodf_column, so a column of the block matches it bitwise
        rows = np.array([ce.rows[0] for ce in singles], dtype=np.int64)
        values = ptdf.values
        if np.any(ptdf.from_cols[rows] < 0) or np.any(ptdf.to_cols[rows] < 0):
            raise ValidationError("contingency branch endpoint column folded, cannot outage")
        diff = values[:, ptdf.from_cols[rows]] - values[:, ptdf.to_cols[rows]]
        den = 1.0 - diff[rows, np.arange(len(rows))]
        feasible = np.abs(den) >= factors.ISLANDING_TOL
        lodf = diff / np.where(feasible, den, 1.0)[None, :]
        lodf[rows, np.arange(len(rows))] = -1.0
        keep_orders = []
        keep_cols = []
        for j, ce in enumerate(singles):
            if not feasible[j]:
                ce.feasible = False
                islanded.append(ce.case_id)
                continue
            ce.lodf = lodf[:, j]
            ce.report_mask = case_mask(grid.contingencies[ce.order].branches)
            keep_orders.append(ce.order)
            keep_cols.append(j)
        if keep_cols:
            ctx.single_orders = np.array(keep_orders, dtype=np.int64)
            ctx.single_rows = rows[keep_cols]
            ctx.single_lodf = lodf[:, keep_cols]
        islanded.sort(
            key=lambda cid: next(ce.order for ce in ctx.cases if ce.case_id == cid)
        )

    if islanded and config.islanding_policy == "error":
        return _BranchContext(
            ptdf=ptdf,
            feasible=False,
            reason=f"islanding under contingencies {islanded}",
            islanded=tuple(islanded),
        )
    ctx.islanded = tuple(islanded)

    ctx.static_flows = _static_base_flows(grid, ptdf)
    _bind_slots(grid, ptdf, ctx)
    return ctx


def _slot_of_injection(grid: Grid, j: int) -> Optional[int]:
    for s, (_si, inj) in enumerate(grid.injection_slots):
        if inj == j:
            return s
    return None


def _static_base_flows(grid: Grid, ptdf: PtdfMatrix) -> np.ndarray:
    """Flows from every non-slot injection plus the folded static column.

    Only slot injections vary per candidate; everything else, including
    injections that merely appear in a loss-of-injection case, belongs to the
    shared base (the case subtracts its setpoint on top).
    """
    flows = (
        ptdf.values[:, ptdf.static_col].copy()
        if ptdf.static_col is not None
        else np.zeros(ptdf.n_rows)
    )
    slot_injections = {inj for _, inj in grid.injection_slots}
    power: dict[int, float] = {}
    for j, inj in enumerate(grid.injections):
        if j not in slot_injections and inj.setpoint != 0.0:
            power[inj.node] = power.get(inj.node, 0.0) + inj.setpoint
    for node, mw in sorted(power.items()):
        col = int(ptdf.node_cols[node])
        if col < 0:
            if ptdf.static_col is None:
                raise ValidationError(
                    f"node {node} carries immovable power but its column is folded"
                )
            continue  # folded into the static column already
        flows += ptdf.values[:, col] * mw
    return flows


def _bind_slots(grid: Grid, ptdf: PtdfMatrix, ctx: _BranchContext) -> None:
    """Resolve, per injection slot, the column used when its bit is False/True."""
    split_cols = factors.split_columns(ptdf)
    n_slots = len(grid.injection_slots)
    col_a = np.zeros(n_slots, dtype=np.int64)
    col_b = np.zeros(n_slots, dtype=np.int64)
    setpoints = np.zeros(n_slots)
    for s, (si, j) in enumerate(grid.injection_slots):
        home = grid.injections[j].node
        a = int(ptdf.node_cols[home])
        if a < 0:
            raise ValidationError(f"injection slot {s}: home column folded")
        col_a[s] = a
        col_b[s] = split_cols.get(grid.substations[si].node, a)
        setpoints[s] = grid.injections[j].setpoint
    ctx.slot_col_a = col_a
    ctx.slot_col_b = col_b
    ctx.slot_setpoints = setpoints


def _candidate_base_flows(ctx: _BranchContext, bits: np.ndarray) -> np.ndarray:
    """N-0 flows for all candidates at once: static base plus movable columns.

    ``bits`` is (T, S) boolean.  Returns (R, T).  A slim matrix product over
    the distinct columns actually used keeps this cheap on reduced PTDFs.
    """
    n_cand = bits.shape[0]
    values = ctx.ptdf.values
    if bits.shape[1] == 0:
        return np.repeat(ctx.static_flows[:, None], n_cand, axis=1)
    cols = np.where(bits, ctx.slot_col_b[None, :], ctx.slot_col_a[None, :])  # (T, S)
    used = np.unique(cols)
    col_pos = {int(c): i for i, c in enumerate(used)}
    weights = np.zeros((len(used), n_cand))
    for s in range(bits.shape[1]):
        mw = ctx.slot_setpoints[s]
        if mw == 0.0:
            continue
        for t in range(n_cand):
            weights[col_pos[int(cols[t, s])], t] += mw
    return ctx.static_flows[:, None] + values[:, used] @ weights


def _case_flows(
    ctx: _BranchContext,
    ce: _CaseEval,
    n0: np.ndarray,
    cand_cols: Optional[np.ndarray],
    cand_sel: slice,
) -> np.ndarray:
    """Post-contingency flows for the candidate block ``n0`` (R x t).

    ``cand_cols`` carries, for injection cases on movable injections, the
    per-candidate column of the outaged injection; ``cand_sel`` selects the
    candidates the block covers.  Accumulation order is fixed so every mode
    and block size produces identical bits.
    """
    if ce.kind == SINGLE_BRANCH:
        return n0 + ce.lodf[:, None] * n0[ce.rows[0], :]
    if ce.kind == MULTI_BRANCH:
        flows = n0.copy()
        for j in range(len(ce.rows)):
            flows += ce.modf[:, j : j + 1] * n0[ce.rows[j], :]
        return flows
    if ce.inj_slot is not None:
        cols = cand_cols[cand_sel]
        return n0 - ctx.ptdf.values[:, cols] * ce.inj_setpoint
    return n0 - ctx.ptdf.values[:, ce.inj_col : ce.inj_col + 1] * ce.inj_setpoint


def _rel_max(ctx: _BranchContext, flows: np.ndarray) -> np.ndarray:
    """Worst relative loading per candidate column."""
    if len(ctx.mon_rows) == 0:
        return np.zeros(flows.shape[1])
    sub = flows if ctx.mon_identity else flows[ctx.mon_rows, :]
    loadings = np.abs(sub) / ctx.mon_ratings[:, None]
    return loadings.max(axis=0)


def _single_scale(ctx: _BranchContext) -> np.ndarray:
    """Per single case, the largest |lodf|/rating over monitored rows (cached)."""
    if ctx.single_scale is None:
        sub = ctx.single_lodf if ctx.mon_identity else ctx.single_lodf[ctx.mon_rows, :]
        ctx.single_scale = (np.abs(sub) / ctx.mon_ratings[:, None]).max(axis=0)
    return ctx.single_scale


def _injection_case_cols(ctx: _BranchContext, bits: np.ndarray) -> dict[int, np.ndarray]:
    """Per-candidate current column of each movable injection named by a case."""
    out: dict[int, np.ndarray] = {}
    for ce in ctx.cases:
        if ce.kind == INJECTION and ce.inj_slot is not None:
            s = ce.inj_slot
            out[ce.order] = np.where(bits[:, s], ctx.slot_col_b[s], ctx.slot_col_a[s])
    return out


def _winner_report(
    grid: Grid,
    ctx: _BranchContext,
    config: SolveConfig,
    n0_block: np.ndarray,
    cand_cols: dict[int, np.ndarray],
    best: int,
) -> SparseReport:
    """Assemble the sparse report for one candidate (column ``best`` of blocks).

    Matches :func:`agg_i` over the same flows entry for entry; single-branch
    cases go through one stacked selection instead of a sort per case.
    """
    sel = slice(best, best + 1)
    n0 = n0_block[:, sel]
    case_ids = [ce.case_id for ce in ctx.cases]
    entries: list[tuple[int, int, float, float]] = []
    rel_pool: list[float] = []

    for ce in ctx.cases:
        if not ce.feasible or ce.kind == SINGLE_BRANCH:
            continue
        flows = _case_flows(ctx, ce, n0, cand_cols.get(ce.order), sel)
        vec = flows[ctx.mon_rows, 0]
        for pos, r, f in _top_rows(vec, ctx.mon_ratings, ce.report_mask, config.topk_per_case):
            entries.append((ce.order, pos, r, f))
            rel_pool.append(r)

    if ctx.single_lodf is not None:
        # a case bounded below the current k-th best loading cannot place an
        # entry in the merged report; descending bounds let the scan stop at
        # the first such case with the report provably unchanged
        n0w = n0[:, 0]
        m0b = float(_rel_max(ctx, n0)[0])
        rowvals = n0_block[ctx.single_rows, best]
        bound = m0b + _single_scale(ctx) * np.abs(rowvals)
        k_glob = config.topk_global
        for c in np.argsort(-bound):
            if len(rel_pool) >= k_glob:
                t_k = np.partition(np.array(rel_pool), len(rel_pool) - k_glob)[
                    len(rel_pool) - k_glob
                ]
                if bound[c] < t_k:
                    break
            flows_c = n0w + ctx.single_lodf[:, c] * rowvals[c]
            vec = flows_c if ctx.mon_identity else flows_c[ctx.mon_rows]
            ce = ctx.cases[int(ctx.single_orders[c])]
            for pos, r, f in _top_rows(
                vec, ctx.mon_ratings, ce.report_mask, config.topk_per_case
            ):
                entries.append((ce.order, pos, r, f))
                rel_pool.append(r)

    branch_ids = [grid.branches[int(k)].id for k in ctx.mon_branches]
    n1_entries = _merge_entries(entries, case_ids, branch_ids, config.topk_global)
    n0_entries = tuple(
        (branch_ids[pos], flow, rel)
        for pos, rel, flow in _top_rows(
            n0[ctx.mon_rows, 0], ctx.mon_ratings, ctx.base_mask, config.topk_global
        )
    )
    return SparseReport(n0_worst=n0_entries, n1_worst=n1_entries)


def _pooled_top_rows(
    ctx: _BranchContext, ce: _CaseEval, flows: np.ndarray, k: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-candidate top-k pool for one case: positions, rels, flows, each (k', T).

    Column t of the pool equals what :func:`_top_rows` selects for candidate
    t: stable argsort on identical values makes the selection unique, so the
    pooled and the per-candidate routes report the same rows and bits.
    """
    idx = np.flatnonzero(ce.report_mask)
    n_cand = flows.shape[1]
    if len(idx) == 0:
        empty = np.zeros((0, n_cand))
        return np.zeros((0, n_cand), dtype=np.int64), empty, empty
    sub = flows[ctx.mon_rows[idx], :]
    rel = np.abs(sub) / ctx.mon_ratings[idx][:, None]
    order = np.argsort(-rel, axis=0, kind="stable")[:k]
    return (
        idx[order],
        np.take_along_axis(rel, order, axis=0),
        np.take_along_axis(sub, order, axis=0),
    )


def _report_from_pools(
    grid: Grid,
    ctx: _BranchContext,
    config: SolveConfig,
    n0_block: np.ndarray,
    pools: list[tuple[int, tuple[np.ndarray, np.ndarray, np.ndarray]]],
    best: int,
) -> SparseReport:
    """Winner report assembled from pooled per-case selections (symmetric mode)."""
    branch_ids = [grid.branches[int(k)].id for k in ctx.mon_branches]
    case_ids = [ce.case_id for ce in ctx.cases]
    entries = []
    for order_idx, (pos, rel, flow) in pools:
        for r in range(pos.shape[0]):
            entries.append(
                (order_idx, int(pos[r, best]), float(rel[r, best]), float(flow[r, best]))
            )
    n1_entries = _merge_entries(entries, case_ids, branch_ids, config.topk_global)
    n0 = n0_block[ctx.mon_rows, best]
    n0_entries = tuple(
        (branch_ids[p], f, r)
        for p, r, f in _top_rows(n0, ctx.mon_ratings, ctx.base_mask, config.topk_global)
    )
    return SparseReport(n0_worst=n0_entries, n1_worst=n1_entries)


def _injection_stage(
    grid: Grid, ctx: _BranchContext, task: TopologyTask, config: SolveConfig
) -> SolveResult:
    bits = np.array(task.injection_sets, dtype=bool).reshape(
        len(task.injection_sets), -1
    )
    n_cand = bits.shape[0]
    n0_block = _candidate_base_flows(ctx, bits)
    cand_cols = _injection_case_cols(ctx, bits)
    penalty = config.islanding_penalty if ctx.islanded else None

    if config.mode == "output_first":
        # Build the full report for every candidate, keep the best: simple,
        # memory-light, pays the aggregation price T times.
        best = -1
        best_metric = np.inf
        best_report: Optional[SparseReport] = None
        for t in range(n_cand):
            sel = slice(t, t + 1)
            n0 = n0_block[:, sel]
            metric = float(_rel_max(ctx, n0)[0])
            for ce in ctx.cases:
                if not ce.feasible:
                    continue
                flows = _case_flows(ctx, ce, n0, cand_cols.get(ce.order), sel)
                metric = max(metric, float(_rel_max(ctx, flows)[0]))
            if penalty is not None:
                metric = max(metric, penalty)
            report = _winner_report(grid, ctx, config, n0_block, cand_cols, t)
            if metric < best_metric:
                best, best_metric, best_report = t, metric, report
        metrics_best = best_metric
    elif config.mode == "metric_first":
        # Score all candidates first, then revisit the cases once more for
        # the winner's report.  Single-branch cases are screened with a per
        # case bound: rel(n0 + l r) <= rel(n0)_max + max(|l|/rating) |r|, so
        # a case whose bound stays under every candidate's running maximum
        # cannot move any metric and is skipped with the result unchanged.
        m0 = _rel_max(ctx, n0_block)
        metrics = m0.copy()
        if penalty is not None:
            np.maximum(metrics, penalty, out=metrics)
        for ce in ctx.cases:
            if not ce.feasible or ce.kind == SINGLE_BRANCH:
                continue
            flows = _case_flows(ctx, ce, n0_block, cand_cols.get(ce.order), slice(None))
            np.maximum(metrics, _rel_max(ctx, flows), out=metrics)
        if ctx.single_lodf is not None:
            lodf = ctx.single_lodf
            rowvals = n0_block[ctx.single_rows, :]  # (C, T)
            scale = _single_scale(ctx)  # (C,)
            bound = m0[None, :] + scale[:, None] * np.abs(rowvals)
            for c in np.argsort(-bound.max(axis=1)):  # likely binding cases first
                if np.all(bound[c] <= metrics):
                    continue
                flows = n0_block + lodf[:, c : c + 1] * rowvals[c : c + 1, :]
                np.maximum(metrics, _rel_max(ctx, flows), out=metrics)
        best = int(np.argmin(metrics))
        metrics_best = float(metrics[best])
        best_report = _winner_report(grid, ctx, config, n0_block, cand_cols, best)
    else:
        # symmetric: one pass that scores candidates and retains per-case
        # top-k pools for all of them, so the winner's report needs no second
        # visit of the contingencies.
        metrics = _rel_max(ctx, n0_block)
        pools = []
        for ce in ctx.cases:
            if not ce.feasible:
                continue
            flows = _case_flows(ctx, ce, n0_block, cand_cols.get(ce.order), slice(None))
            np.maximum(metrics, _rel_max(ctx, flows), out=metrics)
            pools.append((ce.order, _pooled_top_rows(ctx, ce, flows, config.topk_per_case)))
        if penalty is not None:
            np.maximum(metrics, penalty, out=metrics)
        best = int(np.argmin(metrics))
        metrics_best = float(metrics[best])
        best_report = _report_from_pools(grid, ctx, config, n0_block, pools, best)

    return SolveResult(
        metric=metrics_best,
        best_injection=best,
        report=best_report,
        diagnostics=TaskDiagnostics(
            feasible=True, islanded_cases=tuple(sorted(ctx.islanded))
        ),
    )


def infeasible_result(reason: str, islanded: tuple[str, ...] = ()) -> SolveResult:
    return SolveResult(
        metric=None,
        best_injection=None,
        report=None,
        diagnostics=TaskDiagnostics(feasible=False, reason=reason, islanded_cases=islanded),
    )


def solve_prepared(
    grid: Grid,
    split_ptdf: PtdfMatrix,
    task: TopologyTask,
    config: SolveConfig,
    instr: Optional[Instrumentation] = None,
) -> SolveResult:
    """Solve one canonical task whose splits are already applied to the PTDF.

    Entry point for schedulers that share split chains between tasks; the
    plain per-task route goes through :func:`solve_batch`.
    """
    ctx = _branch_stage(grid, split_ptdf, task, config)
    if not ctx.feasible:
        if instr is not None:
            instr.count_task(0)
        return infeasible_result(ctx.reason, ctx.islanded)
    result = _injection_stage(grid, ctx, task, config)
    if instr is not None:
        n_feasible = sum(1 for ce in ctx.cases if ce.feasible)
        instr.count_task(len(task.injection_sets) * (1 + n_feasible))
    return result


def _solve_one(
    grid: Grid,
    base: PtdfMatrix,
    task: TopologyTask,
    config: SolveConfig,
    instr: Optional[Instrumentation],
) -> SolveResult:
    try:
        split_ptdf = _apply_splits(grid, base, task.splits, instr)
    except (SingularSplit, DegenerateSplit) as exc:
        if instr is not None:
            instr.count_task(0)
        return infeasible_result(str(exc))
    return solve_prepared(grid, split_ptdf, task, config, instr)


@dataclass
class CaseFlows:
    """Raw engine flows of one task, for validation against the oracle.

    ``n0`` is (R, T); ``n1`` has one (R, T) array per contingency case, None
    where the case islands the topology.  Rows follow ``row_branches``.
    """

    feasible: bool
    reason: Optional[str] = None
    row_branches: Optional[np.ndarray] = None
    n0: Optional[np.ndarray] = None
    n1: Optional[list[Optional[np.ndarray]]] = None
    islanded_cases: tuple[str, ...] = ()


def candidate_case_flows(
    grid: Grid,
    base: PtdfMatrix,
    task: TopologyTask,
    config: Optional[SolveConfig] = None,
) -> CaseFlows:
    """Every flow vector the solver would score for one task.

    Runs the exact production path (splits, disconnections, case factors,
    candidate columns) but returns the flows instead of aggregating them.
    """
    config = config or SolveConfig()
    config.validate()
    check_base_ptdf(grid, base)
    canon = canonicalize_task(grid, task)
    try:
        split_ptdf = _apply_splits(grid, base, canon.splits, None)
    except (SingularSplit, DegenerateSplit) as exc:
        return CaseFlows(feasible=False, reason=str(exc))
    ctx = _branch_stage(grid, split_ptdf, canon, config)
    if not ctx.feasible:
        return CaseFlows(feasible=False, reason=ctx.reason, islanded_cases=ctx.islanded)
    bits = np.array(canon.injection_sets, dtype=bool).reshape(
        len(canon.injection_sets), -1
    )
    n0_block = _candidate_base_flows(ctx, bits)
    cand_cols = _injection_case_cols(ctx, bits)
    n1: list[Optional[np.ndarray]] = []
    for ce in ctx.cases:
        if not ce.feasible:
            n1.append(None)
            continue
        n1.append(_case_flows(ctx, ce, n0_block, cand_cols.get(ce.order), slice(None)))
    return CaseFlows(
        feasible=True,
        row_branches=ctx.ptdf.row_branches.copy(),
        n0=n0_block,
        n1=n1,
        islanded_cases=ctx.islanded,
    )


def check_base_ptdf(grid: Grid, base: PtdfMatrix) -> None:
    """Reject base matrices the solver cannot work from."""
    if base.applied_updates:
        raise ValidationError("base PTDF must be free of applied updates")
    mon = np.array(grid.monitored, dtype=np.int64)
    if len(mon) and np.any(base.branch_rows[mon] < 0):
        raise ValidationError("monitored branches must all have retained PTDF rows")


def solve_batch(
    grid: Grid,
    base: PtdfMatrix,
    tasks: Sequence[TopologyTask],
    config: Optional[SolveConfig] = None,
    instrumentation: Optional[Instrumentation] = None,
) -> list[SolveResult]:
    """Evaluate tasks independently against one shared base PTDF.

    Results come back in task order.  With ``config.workers > 1`` tasks are
    distributed over a thread pool; each task is solved in isolation, so the
    parallel schedule cannot change any numbers.
    """
    config = config or SolveConfig()
    config.validate()
    check_base_ptdf(grid, base)
    canon = [canonicalize_task(grid, task) for task in tasks]
    results: list[Optional[SolveResult]] = [None] * len(canon)
    if instrumentation is not None:
        instrumentation.note_live_ptdfs(1)

    if config.workers == 1:
        for i, task in enumerate(canon):
            results[i] = _solve_one(grid, base, task, config, instrumentation)
    else:
        def run(i: int) -> None:
            results[i] = _solve_one(grid, base, canon[i], config, instrumentation)

        chunk = config.max_batch if config.max_batch > 0 else len(canon)
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            for start in range(0, len(canon), max(chunk, 1)):
                wave = range(start, min(start + chunk, len(canon)))
                list(pool.map(run, wave))
    return results  # type: ignore[return-value]
