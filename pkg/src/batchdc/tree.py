"""Prefix-tree scheduler: share split updates between tasks with common prefixes.

Tasks whose canonical split sequences share a prefix also share the rank-one
updates along that prefix.  The tree scheduler groups tasks into a prefix
tree over :class:`~batchdc.solver.SplitAction` keys and walks it depth-first,
applying each split exactly once per tree edge.  Disconnections and the
injection bruteforce always run per task, below the shared prefix.

Because tasks are canonicalized identically for the flat and the tree route,
both apply the same updates in the same order to the same arrays, and the
results are bit-identical; only the number of split applications differs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

from . import factors
from .errors import DegenerateSplit, SingularSplit
from .factors import PtdfMatrix
from .grid import Grid
from .solver import (
    Instrumentation,
    SolveConfig,
    SolveResult,
    SplitAction,
    TopologyTask,
    canonicalize_task,
    check_base_ptdf,
    infeasible_result,
    solve_prepared,
)


@dataclass
class TreeNode:
    key: Optional[SplitAction]
    children: dict[SplitAction, "TreeNode"] = field(default_factory=dict)
    tasks: list[int] = field(default_factory=list)


@dataclass
class SplitTree:
    root: TreeNode
    n_edges: int
    depth: int


def build_tree(grid: Grid, tasks: Sequence[TopologyTask]) -> tuple[SplitTree, list[TopologyTask]]:
    """Canonicalize tasks and arrange them in a split prefix tree.

    ``n_edges`` is the number of split applications the tree walk will
    perform; a flat walk performs one per task split instead.
    """
    canon = [canonicalize_task(grid, task) for task in tasks]
    root = TreeNode(key=None)
    n_edges = 0
    depth = 0
    for i, task in enumerate(canon):
        node = root
        for sp in task.splits:
            child = node.children.get(sp)
            if child is None:
                child = TreeNode(key=sp)
                node.children[sp] = child
                n_edges += 1
            node = child
        node.tasks.append(i)
        depth = max(depth, len(task.splits))
    return SplitTree(root=root, n_edges=n_edges, depth=depth), canon


def execute_tree(
    grid: Grid,
    base: PtdfMatrix,
    tasks: Sequence[TopologyTask],
    config: Optional[SolveConfig] = None,
    instrumentation: Optional[Instrumentation] = None,
) -> list[SolveResult]:
    """Solve tasks through the prefix tree; results come back in task order.

    Runs single-threaded: the walk keeps one live PTDF per tree level, which
    is the point of the scheduler (peak memory = depth + 1 matrices).
    """
    config = config or SolveConfig()
    config.validate()
    check_base_ptdf(grid, base)
    tree, canon = build_tree(grid, tasks)
    results: list[Optional[SolveResult]] = [None] * len(canon)
    if instrumentation is not None:
        instrumentation.note_live_ptdfs(1)

    def visit(node: TreeNode, ptdf: PtdfMatrix, level: int) -> None:
        for i in node.tasks:
            results[i] = solve_prepared(grid, ptdf, canon[i], config, instrumentation)
        for key in sorted(node.children, key=lambda sp: (sp.substation, sp.assignment)):
            child = node.children[key]
            try:
                update = factors.compute_bsdf(
                    ptdf, grid, grid.substations[key.substation], key.assignment
                )
                child_ptdf = factors.apply_bsdf(ptdf, update)
            except (SingularSplit, DegenerateSplit) as exc:
                _fail_subtree(child, str(exc), results, instrumentation)
                continue
            if instrumentation is not None:
                instrumentation.count_bsdf()
                instrumentation.note_live_ptdfs(level + 2)
            visit(child, child_ptdf, level + 1)

    visit(tree.root, base, 0)
    return results  # type: ignore[return-value]


def _fail_subtree(
    node: TreeNode,
    reason: str,
    results: list[Optional[SolveResult]],
    instrumentation: Optional[Instrumentation],
) -> None:
    """An infeasible split poisons every task below it."""
    for i in node.tasks:
        if instrumentation is not None:
            instrumentation.count_task(0)
        results[i] = infeasible_result(reason)
    for child in node.children.values():
        _fail_subtree(child, reason, results, instrumentation)
