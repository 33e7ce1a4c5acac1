"""Refactorization reference oracle.

Materializes every candidate topology explicitly (new node per split, branch
lists rewritten, disconnections removed) and solves each contingency case
with a fresh factorization of the reduced susceptance matrix.  No distribution
factors, no updates, no shared state with the batch engine beyond the grid
model itself: deliberately the slow, obviously-correct route, used to validate
the engine and as the speedup baseline in benchmarks.

Islanding is decided by an explicit union-find connectivity check before each
factorization, which is an independent mechanism from the engine's
denominator tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DisconnectedTopology, ValidationError
from .grid import INJECTION, Grid
from .solver import TopologyTask, canonicalize_task


@dataclass
class ExplicitTopology:
    """One branch topology with splits as real nodes and disconnections removed."""

    n_nodes: int
    from_nodes: np.ndarray
    to_nodes: np.ndarray
    susceptances: np.ndarray
    alive: np.ndarray
    slack: int
    split_node_of_substation: dict[int, int]


@dataclass
class OracleSetup:
    """Explicit topology plus per-candidate nodal powers.

    ``powers``: (n_nodes, T) MW, one column per injection candidate.
    ``injection_nodes``: per injection index, its node per candidate (T,).
    """

    topology: ExplicitTopology
    powers: np.ndarray
    injection_nodes: dict[int, np.ndarray]


@dataclass
class OracleResult:
    """Flows per candidate for N-0 and every case; None marks islanded cases."""

    n0: np.ndarray
    n1: list[Optional[np.ndarray]]
    islanded_cases: tuple[str, ...]


def materialize(grid: Grid, task: TopologyTask) -> OracleSetup:
    """Build the explicit topology and candidate powers for one task.

    Raises
    ------
    DisconnectedTopology
        If splits or disconnections leave the base case disconnected.
    """
    canon = canonicalize_task(grid, task)
    from_nodes = grid.from_nodes.copy()
    to_nodes = grid.to_nodes.copy()
    n_nodes = grid.n_nodes
    split_node: dict[int, int] = {}
    for sp in canon.splits:
        sub = grid.substations[sp.substation]
        new_node = n_nodes
        n_nodes += 1
        split_node[sp.substation] = new_node
        for k, bit in zip(sub.branch_elements, sp.assignment):
            if not bit:
                continue
            if from_nodes[k] == sub.node:
                from_nodes[k] = new_node
            elif to_nodes[k] == sub.node:
                to_nodes[k] = new_node
            else:
                raise ValidationError(
                    f"branch {k} is not attached to substation node {sub.node}"
                )
    alive = np.ones(grid.n_branches, dtype=bool)
    alive[list(canon.disconnections)] = False
    topo = ExplicitTopology(
        n_nodes=n_nodes,
        from_nodes=from_nodes,
        to_nodes=to_nodes,
        susceptances=grid.susceptances.copy(),
        alive=alive,
        slack=grid.slack,
        split_node_of_substation=split_node,
    )
    if not _connected(topo, ()):
        raise DisconnectedTopology("base topology of the task is disconnected")

    bits = np.array(canon.injection_sets, dtype=bool).reshape(
        len(canon.injection_sets), -1
    )
    n_cand = bits.shape[0]
    powers = np.zeros((n_nodes, n_cand))
    slots = grid.injection_slots
    slotted = {j for _si, j in slots}
    injection_nodes: dict[int, np.ndarray] = {}
    for j, inj in enumerate(grid.injections):
        if j not in slotted:
            powers[inj.node, :] += inj.setpoint
            injection_nodes[j] = np.full(n_cand, inj.node, dtype=np.int64)
    for s, (si, j) in enumerate(slots):
        inj = grid.injections[j]
        home = inj.node
        there = split_node.get(si, home)
        nodes = np.where(bits[:, s], there, home)
        injection_nodes[j] = nodes
        for t in range(n_cand):
            powers[nodes[t], t] += inj.setpoint
    return OracleSetup(topology=topo, powers=powers, injection_nodes=injection_nodes)


def _connected(topo: ExplicitTopology, extra_dead: Sequence[int]) -> bool:
    parent = list(range(topo.n_nodes))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    dead = set(extra_dead)
    n_comp = topo.n_nodes
    for k in range(len(topo.from_nodes)):
        if not topo.alive[k] or k in dead:
            continue
        ra, rb = find(int(topo.from_nodes[k])), find(int(topo.to_nodes[k]))
        if ra != rb:
            parent[ra] = rb
            n_comp -= 1
    return n_comp == 1


def flows_from_scratch(
    topo: ExplicitTopology,
    powers: np.ndarray,
    dead_branches: Sequence[int] = (),
) -> np.ndarray:
    """Factorize the reduced susceptance matrix and return flows, (E, T).

    Rows of dead or outaged branches are zero.  Caller is responsible for the
    connectivity check.
    """
    dead = set(int(k) for k in dead_branches)
    live = [
        k
        for k in range(len(topo.from_nodes))
        if topo.alive[k] and k not in dead
    ]
    lap = np.zeros((topo.n_nodes, topo.n_nodes))
    for k in live:
        f, t, b = int(topo.from_nodes[k]), int(topo.to_nodes[k]), topo.susceptances[k]
        lap[f, f] += b
        lap[t, t] += b
        lap[f, t] -= b
        lap[t, f] -= b
    keep = [i for i in range(topo.n_nodes) if i != topo.slack]
    theta = np.zeros((topo.n_nodes, powers.shape[1]))
    theta[keep, :] = np.linalg.solve(lap[np.ix_(keep, keep)], powers[keep, :])
    flows = np.zeros((len(topo.from_nodes), powers.shape[1]))
    for k in live:
        f, t, b = int(topo.from_nodes[k]), int(topo.to_nodes[k]), topo.susceptances[k]
        flows[k, :] = b * (theta[f, :] - theta[t, :])
    return flows


def oracle_ptdf(topo: ExplicitTopology) -> np.ndarray:
    """Full PTDF of the explicit topology, (E, n_nodes), slack column zero."""
    eye = np.eye(topo.n_nodes)
    eye[topo.slack, :] = 0.0  # unit injections, never at the slack
    return flows_from_scratch(topo, eye)


def oracle_solve(grid: Grid, setup: OracleSetup) -> OracleResult:
    """Evaluate N-0 and every contingency case by explicit refactorization."""
    topo = setup.topology
    n0 = flows_from_scratch(topo, setup.powers)
    n1: list[Optional[np.ndarray]] = []
    islanded: list[str] = []
    for case in grid.contingencies:
        if case.kind == INJECTION:
            j = case.injection
            inj = grid.injections[j]
            powers = setup.powers.copy()
            nodes = setup.injection_nodes[j]
            for t in range(powers.shape[1]):
                powers[nodes[t], t] -= inj.setpoint
            n1.append(flows_from_scratch(topo, powers))
            continue
        dead = [k for k in case.branches]
        if not _connected(topo, dead):
            n1.append(None)
            islanded.append(case.id)
            continue
        n1.append(flows_from_scratch(topo, setup.powers, dead))
    return OracleResult(n0=n0, n1=n1, islanded_cases=tuple(islanded))


def oracle_metric(
    grid: Grid, result: OracleResult, islanding_penalty: float
) -> np.ndarray:
    """Screening metric per candidate, straight from oracle flows."""
    mon = np.array(grid.monitored, dtype=np.int64)
    ratings = grid.ratings[mon]
    worst = np.max(np.abs(result.n0[mon, :]) / ratings[:, None], axis=0)
    for flows in result.n1:
        if flows is None:
            worst = np.maximum(worst, islanding_penalty)
        else:
            worst = np.maximum(
                worst, np.max(np.abs(flows[mon, :]) / ratings[:, None], axis=0)
            )
    return worst
