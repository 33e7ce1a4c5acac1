"""PTDF computation and low-rank topology updates (LODF, MODF, BSDF).

The engine factorizes the reduced susceptance matrix exactly once, for the
base topology.  Every candidate topology is then reached through rank-one or
block low-rank updates of the PTDF:

* :func:`lodf_column` / :func:`apply_outage_to_ptdf` for single branch
  outages,
* :func:`compute_modf` / :func:`apply_modf_to_ptdf` for simultaneous
  multi-branch outages,
* :func:`compute_bsdf` / :func:`apply_bsdf` for busbar splits with a chosen
  branch reassignment.

All update operators act on the rows of the PTDF, so any extra column that is
a fixed linear combination of node columns (the static column produced by
:func:`reduce_static`) is transformed consistently for free.

A :class:`PtdfMatrix` tracks, per retained row, the *current* columns of the
branch endpoints.  Splits re-home moved branches to a freshly appended column,
and subsequent updates pick the right columns up from this bookkeeping.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np
import scipy.linalg

from .errors import (
    DegenerateSplit,
    InvalidReduction,
    IslandingError,
    SingularSplit,
    SingularSystem,
    ValidationError,
)
from .grid import (
    Grid,
    SplittableSubstation,
    static_injection_fold,
    structurally_required_nodes,
)

# Denominators below this are treated as exact zeros: the candidate topology
# is electrically disconnected rather than ill-conditioned.
ISLANDING_TOL = 1e-8
SPLIT_TOL = 1e-8

# PTDF entries must stay in [-1, 1] up to accumulated roundoff.
PTDF_BOUND_SLACK = 1e-9


@dataclass(frozen=True)
class PtdfMatrix:
    """PTDF with row/column bookkeeping surviving low-rank updates.

    Attributes
    ----------
    values : np.ndarray
        (R, C) float64.  Rows are retained branches, columns are effective
        nodes, then one column per applied split, then (optionally) the
        static column of folded flows.
    row_branches : np.ndarray
        (R,) branch index of each row.
    branch_rows : np.ndarray
        (n_branches,) row of each branch, -1 if not retained.
    node_cols : np.ndarray
        (n_nodes,) column of each node, -1 if folded away.
    from_cols, to_cols : np.ndarray
        (R,) current endpoint columns of each row's branch; splits re-home
        these.  -1 when the endpoint's column was folded.
    slack_col : int
        Column of the slack node (identically zero by construction).
    static_col : int or None
        Column holding folded static flows, always last when present.
    col_origin : tuple
        Per column: ("node", node_index), ("split", substation_node) or
        ("static",).  Used for dumps and diagnostics.
    applied_updates : tuple
        Log of updates applied so far, e.g. ("split", node, new_col, moved)
        or ("outage", branch) or ("multi_outage", branches).
    """

    values: np.ndarray
    row_branches: np.ndarray
    branch_rows: np.ndarray
    node_cols: np.ndarray
    from_cols: np.ndarray
    to_cols: np.ndarray
    slack_col: int
    static_col: Optional[int] = None
    col_origin: tuple = ()
    applied_updates: tuple = ()

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    def row_of(self, branch: int) -> int:
        r = int(self.branch_rows[branch])
        if r < 0:
            raise ValidationError(f"branch {branch} has no retained PTDF row")
        return r


@dataclass(frozen=True)
class BsdfUpdate:
    """Rank-one busbar split update.

    ``bsdf`` is the response of every retained flow to 1 MW through the
    virtual busbar coupler; ``coupler_row`` maps any column-space power vector
    to the coupler flow that closes the split.  ``new_col`` is the column
    position the new busbar will occupy once applied.  ``identity`` marks an
    empty move set (nothing reassigned, PTDF unchanged).
    """

    substation_node: int
    bsdf: np.ndarray
    coupler_row: np.ndarray
    new_col: int
    moved: tuple[int, ...]
    identity: bool = False


@dataclass(frozen=True)
class ModfMatrix:
    """Multiple-outage distribution factors for one set of simultaneous outages.

    ``values[:, j]`` distributes the pre-outage flow of ``branches[j]`` onto
    all retained rows.  Rows of outaged branches are overwritten to -1 on the
    diagonal and 0 elsewhere, so outaged flows land exactly at zero.
    """

    branches: tuple[int, ...]
    rows: np.ndarray
    values: np.ndarray


def build_laplacian(grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Weighted graph Laplacian B and weighted incidence C_w (flows = C_w @ theta)."""
    n = grid.n_nodes
    f, t, b = grid.from_nodes, grid.to_nodes, grid.susceptances
    cw = np.zeros((grid.n_branches, n))
    rows = np.arange(grid.n_branches)
    cw[rows, f] += b
    cw[rows, t] -= b
    lap = np.zeros((n, n))
    np.add.at(lap, (f, f), b)
    np.add.at(lap, (t, t), b)
    np.add.at(lap, (f, t), -b)
    np.add.at(lap, (t, f), -b)
    return lap, cw


def compute_ptdf(grid: Grid, retained_rows: Optional[Sequence[int]] = None) -> PtdfMatrix:
    """Factorize the base topology once and return its PTDF.

    Parameters
    ----------
    grid : Grid
    retained_rows : sequence of int, optional
        Branch indices to keep as rows, in order.  Defaults to all branches.
        Must cover every substation branch element and every contingency
        branch; later updates read those rows.

    Raises
    ------
    SingularSystem
        If the reduced susceptance matrix cannot be factorized.
    """
    if retained_rows is None:
        rows = np.arange(grid.n_branches, dtype=np.int64)
    else:
        rows = np.asarray(retained_rows, dtype=np.int64)
        if len(set(rows.tolist())) != len(rows):
            raise ValidationError("duplicate retained row")
        needed = set()
        for sub in grid.substations:
            needed.update(sub.branch_elements)
        for case in grid.contingencies:
            needed.update(case.branches)
        missing = needed - set(rows.tolist())
        if missing:
            raise ValidationError(
                f"retained rows must include substation/contingency branches, missing {sorted(missing)}"
            )
    lap, cw = build_laplacian(grid)
    keep = np.array([i for i in range(grid.n_nodes) if i != grid.slack])
    lap_r = lap[np.ix_(keep, keep)]
    try:
        part = scipy.linalg.solve(lap_r, cw[rows][:, keep].T, assume_a="pos").T
    except (scipy.linalg.LinAlgError, np.linalg.LinAlgError) as exc:
        raise SingularSystem(f"susceptance matrix factorization failed: {exc}") from exc
    values = np.zeros((len(rows), grid.n_nodes))
    values[:, keep] = part
    branch_rows = np.full(grid.n_branches, -1, dtype=np.int64)
    branch_rows[rows] = np.arange(len(rows))
    node_cols = np.arange(grid.n_nodes, dtype=np.int64)
    return PtdfMatrix(
        values=values,
        row_branches=rows,
        branch_rows=branch_rows,
        node_cols=node_cols,
        from_cols=grid.from_nodes[rows].copy(),
        to_cols=grid.to_nodes[rows].copy(),
        slack_col=grid.slack,
        static_col=None,
        col_origin=tuple(("node", i) for i in range(grid.n_nodes)),
        applied_updates=(),
    )


def reduce_static(
    ptdf: PtdfMatrix,
    grid: Grid,
    static_nodes: Sequence[int],
    static_power: np.ndarray,
) -> PtdfMatrix:
    """Fold static nodes into one column of fixed flows.

    The folded column holds the flows caused by the static nodes' injections;
    a column-space power vector must carry exactly 1 in that position.  Only
    valid on a base PTDF (no updates applied yet): the fold commutes with all
    row-space updates afterwards, not before.

    Raises
    ------
    InvalidReduction
        If the static set intersects nodes whose columns the solver may still
        need (movable injections, substations and their neighbours over
        branch elements, contingency endpoints, the slack), or if updates
        were already applied.
    """
    if ptdf.applied_updates:
        raise InvalidReduction("reduce_static requires an unmodified base PTDF")
    if ptdf.static_col is not None:
        raise InvalidReduction("PTDF already carries a static column")
    static = sorted(set(int(s) for s in static_nodes))
    required = set(structurally_required_nodes(grid))
    for j in grid.movable_injections():
        required.add(grid.injections[j].node)
    clash = required.intersection(static)
    if clash:
        raise InvalidReduction(f"static set intersects required nodes {sorted(clash)}")
    power = np.asarray(static_power, dtype=np.float64)
    if power.shape != (grid.n_nodes,):
        raise ValidationError("static_power must have one entry per node")

    static_arr = np.array(static, dtype=np.int64)
    folded = ptdf.values[:, static_arr] @ power[static_arr] if len(static_arr) else np.zeros(ptdf.n_rows)
    keep = np.array([i for i in range(grid.n_nodes) if i not in set(static)], dtype=np.int64)
    values = np.hstack([ptdf.values[:, keep], folded[:, None]])
    node_cols = np.full(grid.n_nodes, -1, dtype=np.int64)
    node_cols[keep] = np.arange(len(keep))
    remap = np.full(ptdf.n_cols, -1, dtype=np.int64)
    remap[keep] = np.arange(len(keep))
    from_cols = np.where(ptdf.from_cols >= 0, remap[ptdf.from_cols], -1)
    to_cols = np.where(ptdf.to_cols >= 0, remap[ptdf.to_cols], -1)
    origin = tuple(("node", int(i)) for i in keep) + (("static",),)
    return replace(
        ptdf,
        values=values,
        node_cols=node_cols,
        from_cols=from_cols,
        to_cols=to_cols,
        slack_col=int(remap[ptdf.slack_col]),
        static_col=len(keep),
        col_origin=origin,
    )


def column_power(
    ptdf: PtdfMatrix, nodal_mw: Union[Mapping[int, float], np.ndarray, None] = None
) -> np.ndarray:
    """Build a column-space power vector from nodal MW.

    The static column entry is set to 1.  Nonzero power on a folded node is
    rejected: that power belongs in the static column.
    """
    p = np.zeros(ptdf.n_cols)
    if ptdf.static_col is not None:
        p[ptdf.static_col] = 1.0
    if nodal_mw is None:
        return p
    if isinstance(nodal_mw, Mapping):
        items = nodal_mw.items()
    else:
        arr = np.asarray(nodal_mw, dtype=np.float64)
        items = ((i, float(v)) for i, v in enumerate(arr) if v != 0.0)
    for node, mw in items:
        col = int(ptdf.node_cols[node])
        if col < 0:
            if mw != 0.0:
                raise ValidationError(f"node {node} is folded; cannot place {mw} MW there")
            continue
        p[col] += mw
    return p


def n0_flows(ptdf: PtdfMatrix, power: np.ndarray) -> np.ndarray:
    """Base-case flows for a column-space power vector (see column_power)."""
    power = np.asarray(power, dtype=np.float64)
    if power.shape != (ptdf.n_cols,):
        raise ValidationError(
            f"power vector has shape {power.shape}, expected ({ptdf.n_cols},)"
        )
    if ptdf.static_col is not None and power[ptdf.static_col] != 1.0:
        raise ValidationError("static column entry of the power vector must be 1")
    return ptdf.values @ power


def n0_delta(
    ptdf: PtdfMatrix, base_flows: np.ndarray, delta: Mapping[int, float]
) -> np.ndarray:
    """Update base flows for a sparse nodal power change (node -> MW)."""
    flows = np.array(base_flows, dtype=np.float64)
    for node, mw in delta.items():
        if mw == 0.0:
            continue
        col = int(ptdf.node_cols[node])
        if col < 0:
            raise ValidationError(f"node {node} is folded; cannot shift power there")
        flows += ptdf.values[:, col] * mw
    return flows


def lodf_column(ptdf: PtdfMatrix, branch: int) -> np.ndarray:
    """Flow redistribution column for the outage of one branch.

    The self-entry is exactly -1, so applying the column zeroes the outaged
    flow with no residual.

    Raises
    ------
    IslandingError
        If removing the branch disconnects the current topology.
    """
    row = ptdf.row_of(branch)
    f, t = int(ptdf.from_cols[row]), int(ptdf.to_cols[row])
    if f < 0 or t < 0:
        raise ValidationError(f"branch {branch}: endpoint column folded, cannot outage")
    den = 1.0 - (ptdf.values[row, f] - ptdf.values[row, t])
    if abs(den) < ISLANDING_TOL:
        raise IslandingError(f"outage of branch {branch} islands the grid", branches=(branch,))
    col = (ptdf.values[:, f] - ptdf.values[:, t]) / den
    col[row] = -1.0
    return col


def apply_outage_to_flows(flows: np.ndarray, lodf_col: np.ndarray, row: int) -> np.ndarray:
    """Post-outage flows; the outaged row lands at exactly 0."""
    return flows + lodf_col * flows[row]


def apply_outage_to_ptdf(ptdf: PtdfMatrix, lodf_col: np.ndarray, branch: int) -> PtdfMatrix:
    """Rank-one update of the PTDF for a permanent branch disconnection."""
    row = ptdf.row_of(branch)
    values = ptdf.values + np.outer(lodf_col, ptdf.values[row, :])
    values[row, :] = 0.0  # exact, not just up to roundoff
    return replace(
        ptdf,
        values=values,
        applied_updates=ptdf.applied_updates + (("outage", branch),),
    )


def compute_modf(ptdf: PtdfMatrix, branches: Sequence[int]) -> ModfMatrix:
    """Distribution factors for a set of simultaneous branch outages.

    Solves one dense system of size m x m (m = number of outages) against the
    current PTDF.  Equivalent to chaining single-outage updates, but in one
    step and well-defined also when an intermediate single outage would
    island while the full set does not.

    Raises
    ------
    IslandingError
        If the outage set disconnects the current topology (the inner system
        is singular).
    """
    branches = tuple(int(k) for k in branches)
    if len(set(branches)) != len(branches):
        raise ValidationError("duplicate branch in outage set")
    rows = np.array([ptdf.row_of(k) for k in branches], dtype=np.int64)
    f = ptdf.from_cols[rows]
    t = ptdf.to_cols[rows]
    if np.any(f < 0) or np.any(t < 0):
        raise ValidationError("outage branch endpoint column folded")
    inner = np.eye(len(branches)) - (
        ptdf.values[np.ix_(rows, f)] - ptdf.values[np.ix_(rows, t)]
    )
    sv = np.linalg.svd(inner, compute_uv=False)
    if sv[-1] < ISLANDING_TOL * max(1.0, float(sv[0])):
        raise IslandingError(
            f"simultaneous outage of branches {list(branches)} islands the grid",
            branches=branches,
        )
    rhs = ptdf.values[:, f] - ptdf.values[:, t]
    values = np.linalg.solve(inner.T, rhs.T).T
    for i, r in enumerate(rows):
        values[r, :] = 0.0
        values[r, i] = -1.0
    return ModfMatrix(branches=branches, rows=rows, values=values)


def apply_modf_to_flows(flows: np.ndarray, modf: ModfMatrix) -> np.ndarray:
    """Post-outage flows for the whole set; outaged rows land at exactly 0."""
    return flows + modf.values @ flows[modf.rows]


def apply_modf_to_ptdf(ptdf: PtdfMatrix, modf: ModfMatrix) -> PtdfMatrix:
    """Block low-rank PTDF update for permanent multi-branch disconnection."""
    values = ptdf.values + modf.values @ ptdf.values[modf.rows, :]
    values[modf.rows, :] = 0.0
    return replace(
        ptdf,
        values=values,
        applied_updates=ptdf.applied_updates + (("multi_outage", modf.branches),),
    )


def compute_bsdf(
    ptdf: PtdfMatrix,
    grid: Grid,
    substation: SplittableSubstation,
    assignment: Sequence[bool],
) -> BsdfUpdate:
    """Rank-one update splitting a substation busbar in two.

    Branch elements whose assignment bit is True move to the new busbar B;
    the rest stay on the original busbar A.  The update is derived from a
    virtual zero-impedance coupler between A and B: the coupler flow that
    balances B's power is eliminated, which yields a rank-one correction of
    every retained row plus one new column for B.

    The same formula covers splits of the slack substation; no special case.

    Parameters
    ----------
    ptdf : PtdfMatrix
        Current matrix (may already carry earlier splits or outages).
    grid : Grid
    substation : SplittableSubstation
    assignment : sequence of bool
        One bit per branch element, in element order.

    Raises
    ------
    DegenerateSplit
        If every branch element moves, leaving busbar A with no connection.
    SingularSplit
        If the split disconnects the grid (update denominator vanishes).
    """
    elements = substation.branch_elements
    if len(assignment) != len(elements):
        raise ValidationError(
            f"assignment has {len(assignment)} bits for {len(elements)} branch elements"
        )
    a_col = int(ptdf.node_cols[substation.node])
    if a_col < 0:
        raise ValidationError(f"substation node {substation.node} column was folded")
    new_col = ptdf.n_cols
    moved = tuple(k for k, bit in zip(elements, assignment) if bit)
    if not moved:
        return BsdfUpdate(
            substation_node=substation.node,
            bsdf=np.zeros(ptdf.n_rows),
            coupler_row=np.zeros(ptdf.n_cols + 1),
            new_col=new_col,
            moved=(),
            identity=True,
        )
    stay = tuple(k for k, bit in zip(elements, assignment) if not bit)

    def side(k: int) -> tuple[int, float, int]:
        row = ptdf.row_of(k)
        if int(ptdf.from_cols[row]) == a_col:
            return row, 1.0, int(ptdf.to_cols[row])
        if int(ptdf.to_cols[row]) == a_col:
            return row, -1.0, int(ptdf.from_cols[row])
        raise ValidationError(
            f"branch {k} is no longer attached to substation node {substation.node}"
        )

    stay_b = sum(grid.branches[k].susceptance for k in stay)
    if not stay_b > 0.0:
        raise DegenerateSplit(
            f"split of node {substation.node} leaves busbar A without any branch"
        )

    # Coupler sensitivity row: flow through the A->B coupler per unit of
    # column-space power, before the coupler is removed.
    coupler = np.zeros(ptdf.n_cols + 1)
    for k in moved:
        row, sign, _far = side(k)
        coupler[: ptdf.n_cols] += sign * ptdf.values[row, :]
    coupler[new_col] = coupler[a_col] - 1.0

    numerator = np.zeros(ptdf.n_rows)
    denominator = coupler[a_col]
    for k in stay:
        row, sign, far = side(k)
        if far < 0:
            raise ValidationError(f"branch {k}: far endpoint column folded")
        w = grid.branches[k].susceptance / stay_b
        numerator += w * (ptdf.values[:, far] - ptdf.values[:, a_col])
        numerator[row] += sign * w
        denominator -= w * coupler[far]
    if abs(denominator) < SPLIT_TOL:
        raise SingularSplit(
            f"split of node {substation.node} with assignment {list(assignment)} "
            "disconnects the grid"
        )
    return BsdfUpdate(
        substation_node=substation.node,
        bsdf=numerator / denominator,
        coupler_row=coupler,
        new_col=new_col,
        moved=moved,
        identity=False,
    )


def apply_bsdf(ptdf: PtdfMatrix, update: BsdfUpdate) -> PtdfMatrix:
    """Apply a busbar split: append the new busbar column, add the rank-one term.

    Identity updates (empty move set) return the input matrix unchanged.
    Moved branches are re-homed to the new column so later updates see the
    post-split topology.
    """
    if update.identity:
        return ptdf
    a_col = int(ptdf.node_cols[update.substation_node])
    extended = np.hstack([ptdf.values, ptdf.values[:, a_col : a_col + 1]])
    values = extended + np.outer(update.bsdf, update.coupler_row)
    from_cols = ptdf.from_cols.copy()
    to_cols = ptdf.to_cols.copy()
    for k in update.moved:
        row = ptdf.row_of(k)
        if int(from_cols[row]) == a_col:
            from_cols[row] = update.new_col
        elif int(to_cols[row]) == a_col:
            to_cols[row] = update.new_col
        else:
            raise ValidationError(f"branch {k} detached from split node before apply")
    # keep the static column last so its position stays predictable
    static_col = ptdf.static_col
    if static_col is not None:
        order = list(range(ptdf.n_cols + 1))
        order[static_col], order[-1] = order[-1], order[static_col]
        values = values[:, order]
        remap = np.empty(len(order), dtype=np.int64)
        remap[order] = np.arange(len(order))
        node_cols = np.where(ptdf.node_cols >= 0, remap[ptdf.node_cols], -1)
        from_cols = np.where(from_cols >= 0, remap[from_cols], -1)
        to_cols = np.where(to_cols >= 0, remap[to_cols], -1)
        origin = list(ptdf.col_origin) + [("split", update.substation_node)]
        origin[static_col], origin[-1] = origin[-1], origin[static_col]
        return replace(
            ptdf,
            values=values,
            node_cols=node_cols,
            from_cols=from_cols,
            to_cols=to_cols,
            slack_col=int(remap[ptdf.slack_col]),
            static_col=len(order) - 1,
            col_origin=tuple(origin),
            applied_updates=ptdf.applied_updates
            + (("split", update.substation_node, int(remap[update.new_col]), update.moved),),
        )
    return replace(
        ptdf,
        values=values,
        from_cols=from_cols,
        to_cols=to_cols,
        col_origin=ptdf.col_origin + (("split", update.substation_node),),
        applied_updates=ptdf.applied_updates
        + (("split", update.substation_node, update.new_col, update.moved),),
    )


def split_columns(ptdf: PtdfMatrix) -> dict[int, int]:
    """Column of the new busbar per split substation node (latest split wins)."""
    out: dict[int, int] = {}
    for record in ptdf.applied_updates:
        if record[0] == "split":
            out[record[1]] = record[2]
    return out


def prepare_base_ptdf(
    grid: Grid,
    retained_rows: Optional[Sequence[int]] = None,
    fold_static: bool = True,
) -> PtdfMatrix:
    """Factorize once and fold static injections: the standard solve setup.

    With ``fold_static`` the nodes no update can ever touch collapse into a
    single column of pre-computed flows, shrinking every later matrix
    operation; flows and results are unchanged by the fold.
    """
    ptdf = compute_ptdf(grid, retained_rows)
    if not fold_static:
        return ptdf
    fold = static_injection_fold(grid)
    return reduce_static(ptdf, grid, fold.static_nodes, fold.static_power)


def validate_ptdf(ptdf: PtdfMatrix) -> None:
    """Check structural PTDF invariants: slack column zero, entries in [-1, 1].

    The static column is excluded (it holds MW, not factors).

    Raises
    ------
    ValidationError
        On the first violated invariant.
    """
    cols = [c for c in range(ptdf.n_cols) if c != ptdf.static_col]
    block = ptdf.values[:, cols]
    if np.any(np.abs(block) > 1.0 + PTDF_BOUND_SLACK):
        worst = float(np.max(np.abs(block)))
        raise ValidationError(f"PTDF entry out of [-1, 1]: |value| = {worst}")
    if np.any(ptdf.values[:, ptdf.slack_col] != 0.0):
        raise ValidationError("slack column is not identically zero")
