"""Static grid model: nodes, branches, injections, switchable substations, contingencies.

All cross-references between objects use dense integer indices (position in the
owning tuple).  String ids exist only for file I/O and reporting.  The model is
immutable; topology candidates are expressed as tasks on top of it, never by
mutating a ``Grid``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .errors import ValidationError

SINGLE_BRANCH = "single_branch"
MULTI_BRANCH = "multi_branch"
INJECTION = "injection"

_CONTINGENCY_KINDS = (SINGLE_BRANCH, MULTI_BRANCH, INJECTION)


@dataclass(frozen=True)
class Branch:
    """Directed branch with susceptance and thermal rating.

    The from/to orientation fixes the sign convention of flows: positive flow
    runs from ``from_node`` to ``to_node``.
    """

    id: str
    from_node: int
    to_node: int
    susceptance: float
    rating: float
    monitored: bool = True


@dataclass(frozen=True)
class Injection:
    """Nodal power injection in MW (generation positive, load negative)."""

    id: str
    node: int
    setpoint: float


@dataclass(frozen=True)
class SplittableSubstation:
    """A node whose busbar can be split in two.

    ``branch_elements`` lists the branch indices that can be reassigned to the
    new busbar; their order defines the meaning of a branch-assignment vector.
    ``injection_elements`` lists reassignable injections the same way.
    Every listed branch must be incident on ``node`` and every listed
    injection must sit at ``node``.
    """

    node: int
    branch_elements: tuple[int, ...]
    injection_elements: tuple[int, ...] = ()


@dataclass(frozen=True)
class ContingencyCase:
    """One N-1 case: loss of one branch, a set of branches, or one injection."""

    id: str
    kind: str
    branches: tuple[int, ...] = ()
    injection: Optional[int] = None


@dataclass(frozen=True)
class Grid:
    """Immutable grid snapshot with a fixed slack node.

    Construct through :func:`build_grid` or the loaders in :mod:`batchdc.io`
    and :mod:`batchdc.matpower`, which run full validation.
    """

    node_ids: tuple[str, ...]
    branches: tuple[Branch, ...]
    injections: tuple[Injection, ...]
    slack: int
    substations: tuple[SplittableSubstation, ...] = ()
    contingencies: tuple[ContingencyCase, ...] = ()

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def n_branches(self) -> int:
        return len(self.branches)

    @cached_property
    def from_nodes(self) -> np.ndarray:
        return np.array([b.from_node for b in self.branches], dtype=np.int64)

    @cached_property
    def to_nodes(self) -> np.ndarray:
        return np.array([b.to_node for b in self.branches], dtype=np.int64)

    @cached_property
    def susceptances(self) -> np.ndarray:
        return np.array([b.susceptance for b in self.branches], dtype=np.float64)

    @cached_property
    def ratings(self) -> np.ndarray:
        return np.array([b.rating for b in self.branches], dtype=np.float64)

    @cached_property
    def monitored(self) -> tuple[int, ...]:
        return tuple(i for i, b in enumerate(self.branches) if b.monitored)

    @cached_property
    def node_index(self) -> dict[str, int]:
        return {nid: i for i, nid in enumerate(self.node_ids)}

    @cached_property
    def branch_index(self) -> dict[str, int]:
        return {b.id: i for i, b in enumerate(self.branches)}

    @cached_property
    def injection_index(self) -> dict[str, int]:
        return {inj.id: i for i, inj in enumerate(self.injections)}

    def nodal_power(self) -> np.ndarray:
        """Sum of injection setpoints per node, MW, shape (n_nodes,)."""
        p = np.zeros(self.n_nodes)
        for inj in self.injections:
            p[inj.node] += inj.setpoint
        return p

    def incident_branches(self, node: int) -> tuple[int, ...]:
        return tuple(
            i for i, b in enumerate(self.branches)
            if b.from_node == node or b.to_node == node
        )

    @cached_property
    def injection_slots(self) -> tuple[tuple[int, int], ...]:
        """Reassignable injection slots as (substation index, injection index).

        Concatenated over substations in substation order, preserving each
        substation's ``injection_elements`` order.  A task's injection
        assignment vector has one boolean per slot.
        """
        slots = []
        for si, sub in enumerate(self.substations):
            for inj in sub.injection_elements:
                slots.append((si, inj))
        return tuple(slots)

    def movable_injections(self) -> frozenset[int]:
        """Injections whose node can change at solve time.

        Covers injections listed as substation elements and injections named
        by an injection contingency (the latter never move, but their column
        is consumed by the outage delta, so they count as non-static).
        """
        out = set()
        for sub in self.substations:
            out.update(sub.injection_elements)
        for case in self.contingencies:
            if case.kind == INJECTION:
                out.add(case.injection)
        return frozenset(out)

    def connected_components(self, dead_branches: Iterable[int] = ()) -> int:
        """Number of connected components, optionally with some branches removed."""
        dead = frozenset(dead_branches)
        uf = _UnionFind(self.n_nodes)
        for i, b in enumerate(self.branches):
            if i not in dead:
                uf.union(b.from_node, b.to_node)
        return uf.n_components()

    def bridges(self) -> frozenset[int]:
        """Branch indices whose single removal disconnects the grid.

        Parallel branches are handled: a branch duplicated by another branch
        over the same node pair is never a bridge.
        """
        return _bridges(self.n_nodes, self.from_nodes, self.to_nodes)

    def validate(self) -> None:
        """Check every structural invariant, raising ValidationError on the first breach."""
        n = self.n_nodes
        if n == 0:
            raise ValidationError("grid has no nodes")
        if len(set(self.node_ids)) != n:
            raise ValidationError("duplicate node ids")
        if len(set(b.id for b in self.branches)) != len(self.branches):
            raise ValidationError("duplicate branch ids")
        if len(set(i.id for i in self.injections)) != len(self.injections):
            raise ValidationError("duplicate injection ids")
        if not 0 <= self.slack < n:
            raise ValidationError(f"slack index {self.slack} out of range")
        for i, b in enumerate(self.branches):
            if not (0 <= b.from_node < n and 0 <= b.to_node < n):
                raise ValidationError(f"branch {b.id}: endpoint out of range")
            if b.from_node == b.to_node:
                raise ValidationError(f"branch {b.id}: self-loop")
            if not b.susceptance > 0.0:
                raise ValidationError(f"branch {b.id}: susceptance must be > 0")
            if not b.rating > 0.0:
                raise ValidationError(f"branch {b.id}: rating must be > 0")
        for inj in self.injections:
            if not 0 <= inj.node < n:
                raise ValidationError(f"injection {inj.id}: node out of range")
        seen_sub_nodes = set()
        for si, sub in enumerate(self.substations):
            if not 0 <= sub.node < n:
                raise ValidationError(f"substation #{si}: node out of range")
            if sub.node in seen_sub_nodes:
                raise ValidationError(
                    f"substation #{si}: node {self.node_ids[sub.node]} listed twice"
                )
            seen_sub_nodes.add(sub.node)
            if len(set(sub.branch_elements)) != len(sub.branch_elements):
                raise ValidationError(f"substation #{si}: duplicate branch element")
            for k in sub.branch_elements:
                if not 0 <= k < len(self.branches):
                    raise ValidationError(f"substation #{si}: branch element out of range")
                b = self.branches[k]
                if sub.node not in (b.from_node, b.to_node):
                    raise ValidationError(
                        f"substation #{si}: branch {b.id} not incident on its node"
                    )
            if len(set(sub.injection_elements)) != len(sub.injection_elements):
                raise ValidationError(f"substation #{si}: duplicate injection element")
            for j in sub.injection_elements:
                if not 0 <= j < len(self.injections):
                    raise ValidationError(f"substation #{si}: injection element out of range")
                if self.injections[j].node != sub.node:
                    raise ValidationError(
                        f"substation #{si}: injection {self.injections[j].id} "
                        "not located at its node"
                    )
        seen_case_ids = set()
        for case in self.contingencies:
            if case.id in seen_case_ids:
                raise ValidationError(f"duplicate contingency id {case.id}")
            seen_case_ids.add(case.id)
            if case.kind not in _CONTINGENCY_KINDS:
                raise ValidationError(f"contingency {case.id}: unknown kind {case.kind!r}")
            if case.kind == SINGLE_BRANCH:
                if len(case.branches) != 1:
                    raise ValidationError(
                        f"contingency {case.id}: single_branch needs exactly one branch"
                    )
            elif case.kind == MULTI_BRANCH:
                if len(case.branches) < 2:
                    raise ValidationError(
                        f"contingency {case.id}: multi_branch needs at least two branches"
                    )
                if len(set(case.branches)) != len(case.branches):
                    raise ValidationError(f"contingency {case.id}: duplicate branch")
            if case.kind in (SINGLE_BRANCH, MULTI_BRANCH):
                if case.injection is not None:
                    raise ValidationError(f"contingency {case.id}: unexpected injection field")
                for k in case.branches:
                    if not 0 <= k < len(self.branches):
                        raise ValidationError(f"contingency {case.id}: branch out of range")
            else:
                if case.branches:
                    raise ValidationError(f"contingency {case.id}: unexpected branches field")
                if case.injection is None or not 0 <= case.injection < len(self.injections):
                    raise ValidationError(f"contingency {case.id}: injection out of range")
        if self.connected_components() != 1:
            raise ValidationError("grid is not connected")


def build_grid(
    node_ids: Sequence[str],
    branches: Sequence[Branch],
    injections: Sequence[Injection],
    slack: int,
    substations: Sequence[SplittableSubstation] = (),
    contingencies: Sequence[ContingencyCase] = (),
) -> Grid:
    """Assemble and validate a Grid."""
    grid = Grid(
        node_ids=tuple(node_ids),
        branches=tuple(branches),
        injections=tuple(injections),
        slack=slack,
        substations=tuple(substations),
        contingencies=tuple(contingencies),
    )
    grid.validate()
    return grid


class _UnionFind:
    """Plain union-find with path halving, sized for repeated connectivity checks."""

    __slots__ = ("parent", "count")

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.count = n

    def find(self, x: int) -> int:
        p = self.parent
        while p[x] != x:
            p[x] = p[p[x]]
            x = p[x]
        return x

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[ra] = rb
            self.count -= 1

    def n_components(self) -> int:
        return self.count


def _bridges(n_nodes: int, from_nodes: np.ndarray, to_nodes: np.ndarray) -> frozenset[int]:
    """Bridge edges of a multigraph via iterative Tarjan lowlink."""
    adj: list[list[tuple[int, int]]] = [[] for _ in range(n_nodes)]
    for k in range(len(from_nodes)):
        f, t = int(from_nodes[k]), int(to_nodes[k])
        adj[f].append((t, k))
        adj[t].append((f, k))
    disc = [-1] * n_nodes
    low = [0] * n_nodes
    out: set[int] = set()
    timer = 0
    for root in range(n_nodes):
        if disc[root] != -1:
            continue
        # stack entries: (node, incoming edge index, iterator position)
        stack = [(root, -1, 0)]
        disc[root] = low[root] = timer
        timer += 1
        while stack:
            v, in_edge, i = stack.pop()
            if i < len(adj[v]):
                stack.append((v, in_edge, i + 1))
                w, k = adj[v][i]
                if k == in_edge:
                    continue
                if disc[w] == -1:
                    disc[w] = low[w] = timer
                    timer += 1
                    stack.append((w, k, 0))
                else:
                    low[v] = min(low[v], disc[w])
            else:
                if in_edge != -1:
                    # v is done; propagate lowlink to its parent (now on top)
                    pv = stack[-1][0]
                    low[pv] = min(low[pv], low[v])
                    if low[v] > disc[pv]:
                        out.add(in_edge)
    return frozenset(out)


@dataclass(frozen=True)
class StaticFold:
    """Partition of the nodes into static and effective sets.

    ``static_nodes`` can be folded into a single PTDF column because their
    nodal power never changes and no topology update touches them.
    ``static_power`` holds the folded MW per node (immovable injections only);
    entries outside ``static_nodes`` are the immovable power that must stay
    nodally resolved because the node itself is effective.
    """

    static_nodes: tuple[int, ...]
    effective_nodes: tuple[int, ...]
    static_power: np.ndarray


def structurally_required_nodes(grid: Grid) -> frozenset[int]:
    """Nodes whose PTDF column any topology update or outage delta may read.

    Covers the slack, every switchable substation node, the far endpoint of
    every substation branch element (the split update reads those columns),
    both endpoints of every branch named by a contingency, and the node of
    every injection named by an injection contingency.
    """
    req = {grid.slack}
    for sub in grid.substations:
        req.add(sub.node)
        for k in sub.branch_elements:
            b = grid.branches[k]
            req.add(b.from_node if b.to_node == sub.node else b.to_node)
    for case in grid.contingencies:
        for k in case.branches:
            req.add(grid.branches[k].from_node)
            req.add(grid.branches[k].to_node)
        if case.injection is not None:
            req.add(grid.injections[case.injection].node)
    return frozenset(req)


def static_injection_fold(grid: Grid, movable: Optional[Iterable[int]] = None) -> StaticFold:
    """Split the nodes into a foldable static set and the effective rest.

    A node is static when no movable injection sits there and no update needs
    its column (see :func:`structurally_required_nodes`).  All immovable
    injection power is summed per node into ``static_power``; the portion on
    static nodes is what a reduction folds into the static column.

    Parameters
    ----------
    grid : Grid
    movable : iterable of int, optional
        Injection indices treated as relocatable.  Defaults to
        ``grid.movable_injections()``; an explicit value is unioned with that
        set so required columns can never be folded away.
    """
    mov = set(grid.movable_injections())
    if movable is not None:
        mov |= set(movable)
    required = set(structurally_required_nodes(grid))
    for j in mov:
        required.add(grid.injections[j].node)
    static_power = np.zeros(grid.n_nodes)
    for j, inj in enumerate(grid.injections):
        if j not in mov:
            static_power[inj.node] += inj.setpoint
    static = tuple(sorted(set(range(grid.n_nodes)) - required))
    effective = tuple(sorted(required))
    return StaticFold(static_nodes=static, effective_nodes=effective, static_power=static_power)


def replace_stub_branches(grid: Grid) -> Grid:
    """Remove radial appendages hanging off substation nodes.

    A bridge incident on a substation whose far side contains no slack, no
    substation, and no branch referenced by any contingency is removed
    together with everything behind it; injections on the removed side are
    re-homed to the substation node and appended to its reassignable
    injection elements.  Applied to convergence, so chains of stubs collapse.
    Monitored branches inside a removed appendage disappear from the
    monitored set (their flow is fixed by the appendage's injections and
    carries no screening information).

    Returns a new validated Grid; the input is never modified.
    """
    current = grid
    while True:
        shrunk = _remove_one_stub_layer(current)
        if shrunk is None:
            current.validate()
            return current
        current = shrunk


def _remove_one_stub_layer(grid: Grid) -> Optional[Grid]:
    bridges = grid.bridges()
    referenced = set()
    for case in grid.contingencies:
        referenced.update(case.branches)
    sub_nodes = {sub.node for sub in grid.substations}

    for sub_pos, sub in enumerate(grid.substations):
        for k in grid.incident_branches(sub.node):
            if k not in bridges or k in referenced:
                continue
            b = grid.branches[k]
            far = b.from_node if b.to_node == sub.node else b.to_node
            side_nodes, side_branches = _far_side(grid, k, far)
            if grid.slack in side_nodes or side_nodes & sub_nodes:
                continue
            if side_branches & referenced:
                continue
            return _carve(grid, sub_pos, k, side_nodes, side_branches | {k})
    return None


def _far_side(grid: Grid, cut_branch: int, start: int) -> tuple[set[int], set[int]]:
    """Nodes and branches reachable from start without crossing cut_branch."""
    seen = {start}
    frontier = [start]
    side_branches: set[int] = set()
    adj: dict[int, list[tuple[int, int]]] = {}
    for i, b in enumerate(grid.branches):
        adj.setdefault(b.from_node, []).append((b.to_node, i))
        adj.setdefault(b.to_node, []).append((b.from_node, i))
    while frontier:
        v = frontier.pop()
        for w, i in adj.get(v, ()):
            if i == cut_branch:
                continue
            side_branches.add(i)
            if w not in seen:
                seen.add(w)
                frontier.append(w)
    return seen, side_branches


def _carve(
    grid: Grid,
    sub_pos: int,
    cut_branch: int,
    dead_nodes: set[int],
    dead_branches: set[int],
) -> Grid:
    """Build the reduced grid with one appendage removed and injections re-homed."""
    sub_node = grid.substations[sub_pos].node
    node_map = {}
    new_ids = []
    for i, nid in enumerate(grid.node_ids):
        if i not in dead_nodes:
            node_map[i] = len(new_ids)
            new_ids.append(nid)
    branch_map = {}
    new_branches = []
    for i, b in enumerate(grid.branches):
        if i in dead_branches:
            continue
        branch_map[i] = len(new_branches)
        new_branches.append(
            replace(b, from_node=node_map[b.from_node], to_node=node_map[b.to_node])
        )
    rehomed = []
    new_injections = []
    for j, inj in enumerate(grid.injections):
        if inj.node in dead_nodes:
            rehomed.append(j)
            new_injections.append(replace(inj, node=node_map[sub_node]))
        else:
            new_injections.append(replace(inj, node=node_map[inj.node]))
    new_subs = []
    for si, sub in enumerate(grid.substations):
        elements = tuple(branch_map[k] for k in sub.branch_elements if k not in dead_branches)
        inj_elements = list(sub.injection_elements)
        if si == sub_pos:
            inj_elements.extend(j for j in rehomed if j not in inj_elements)
        new_subs.append(
            SplittableSubstation(
                node=node_map[sub.node],
                branch_elements=elements,
                injection_elements=tuple(inj_elements),
            )
        )
    new_cases = []
    for case in grid.contingencies:
        new_cases.append(
            replace(case, branches=tuple(branch_map[k] for k in case.branches))
        )
    return Grid(
        node_ids=tuple(new_ids),
        branches=tuple(new_branches),
        injections=tuple(new_injections),
        slack=node_map[grid.slack],
        substations=tuple(new_subs),
        contingencies=tuple(new_cases),
    )
