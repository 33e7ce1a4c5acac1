"""Native JSON grid format plus task/result JSONL streams.

Grid files are a single JSON object:

.. code-block:: json

    {
      "nodes": [{"id": "n0"}, ...],
      "branches": [{"id": "e0", "from": "n0", "to": "n1",
                    "susceptance": 10.0, "rating": 120.0, "monitored": true}, ...],
      "injections": [{"id": "g0", "node": "n0", "p_mw": 90.0}, ...],
      "slack": "n0",
      "substations": [{"node": "n3",
                       "branch_elements": ["e4", "e7"],
                       "injection_elements": ["g2"]}, ...],
      "contingencies": [{"id": "c0", "kind": "single_branch", "branches": ["e1"]},
                        {"id": "c9", "kind": "injection", "injection": "g0"}, ...]
    }

Dense integer indices follow file order.  Task files are JSONL, one topology
task per line:

.. code-block:: json

    {"splits": [{"substation": "n3", "branch_assignment": [true, false]}],
     "disconnections": ["e12"],
     "injection_sets": [[false], [true]]}

Result files are JSONL in the same order as the task file.
"""

from __future__ import annotations

import json
from typing import Any, Iterable, TextIO

from .errors import ParseError, ValidationError
from .grid import (
    INJECTION,
    Branch,
    ContingencyCase,
    Grid,
    Injection,
    SplittableSubstation,
    build_grid,
)
from .solver import SolveResult, SparseReport, SplitAction, TopologyTask


def grid_from_dict(doc: dict[str, Any]) -> Grid:
    try:
        node_ids = [str(n["id"]) for n in doc["nodes"]]
        node_of = {nid: i for i, nid in enumerate(node_ids)}
        branches = []
        for b in doc["branches"]:
            branches.append(
                Branch(
                    id=str(b["id"]),
                    from_node=_lookup(node_of, b["from"], "node"),
                    to_node=_lookup(node_of, b["to"], "node"),
                    susceptance=float(b["susceptance"]),
                    rating=float(b["rating"]),
                    monitored=bool(b.get("monitored", True)),
                )
            )
        branch_of = {br.id: i for i, br in enumerate(branches)}
        injections = []
        for inj in doc.get("injections", []):
            injections.append(
                Injection(
                    id=str(inj["id"]),
                    node=_lookup(node_of, inj["node"], "node"),
                    setpoint=float(inj["p_mw"]),
                )
            )
        inj_of = {inj.id: i for i, inj in enumerate(injections)}
        substations = []
        for sub in doc.get("substations", []):
            substations.append(
                SplittableSubstation(
                    node=_lookup(node_of, sub["node"], "node"),
                    branch_elements=tuple(
                        _lookup(branch_of, x, "branch") for x in sub.get("branch_elements", [])
                    ),
                    injection_elements=tuple(
                        _lookup(inj_of, x, "injection")
                        for x in sub.get("injection_elements", [])
                    ),
                )
            )
        contingencies = []
        for case in doc.get("contingencies", []):
            kind = str(case["kind"])
            contingencies.append(
                ContingencyCase(
                    id=str(case["id"]),
                    kind=kind,
                    branches=tuple(
                        _lookup(branch_of, x, "branch") for x in case.get("branches", [])
                    ),
                    injection=(
                        _lookup(inj_of, case["injection"], "injection")
                        if kind == INJECTION
                        else None
                    ),
                )
            )
        slack = _lookup(node_of, doc["slack"], "node")
    except KeyError as exc:
        raise ParseError(f"grid document missing field {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ParseError(f"grid document malformed: {exc}") from exc
    return build_grid(node_ids, branches, injections, slack, substations, contingencies)


def _lookup(table: dict[str, int], key: Any, what: str) -> int:
    try:
        return table[str(key)]
    except KeyError:
        raise ValidationError(f"unknown {what} id {key!r}") from None


def grid_to_dict(grid: Grid) -> dict[str, Any]:
    return {
        "nodes": [{"id": nid} for nid in grid.node_ids],
        "branches": [
            {
                "id": b.id,
                "from": grid.node_ids[b.from_node],
                "to": grid.node_ids[b.to_node],
                "susceptance": b.susceptance,
                "rating": b.rating,
                "monitored": b.monitored,
            }
            for b in grid.branches
        ],
        "injections": [
            {"id": inj.id, "node": grid.node_ids[inj.node], "p_mw": inj.setpoint}
            for inj in grid.injections
        ],
        "slack": grid.node_ids[grid.slack],
        "substations": [
            {
                "node": grid.node_ids[sub.node],
                "branch_elements": [grid.branches[k].id for k in sub.branch_elements],
                "injection_elements": [grid.injections[j].id for j in sub.injection_elements],
            }
            for sub in grid.substations
        ],
        "contingencies": [
            _case_to_dict(grid, case) for case in grid.contingencies
        ],
    }


def _case_to_dict(grid: Grid, case: ContingencyCase) -> dict[str, Any]:
    doc: dict[str, Any] = {"id": case.id, "kind": case.kind}
    if case.kind == INJECTION:
        doc["injection"] = grid.injections[case.injection].id
    else:
        doc["branches"] = [grid.branches[k].id for k in case.branches]
    return doc


def load_grid(path: str) -> Grid:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from exc
    return grid_from_dict(doc)


def save_grid(grid: Grid, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(grid_to_dict(grid), fh, indent=1)
        fh.write("\n")


def task_from_dict(doc: dict[str, Any], grid: Grid) -> TopologyTask:
    sub_of_node = {grid.node_ids[sub.node]: i for i, sub in enumerate(grid.substations)}
    splits = []
    for sp in doc.get("splits", []):
        si = sub_of_node.get(str(sp["substation"]))
        if si is None:
            raise ValidationError(f"unknown substation {sp['substation']!r}")
        splits.append(
            SplitAction(substation=si, assignment=tuple(bool(x) for x in sp["branch_assignment"]))
        )
    disconnections = tuple(
        _lookup(grid.branch_index, x, "branch") for x in doc.get("disconnections", [])
    )
    injection_sets = tuple(
        tuple(bool(x) for x in row) for row in doc.get("injection_sets", [[]])
    )
    if not injection_sets:
        injection_sets = ((),)
    return TopologyTask(
        splits=tuple(splits), disconnections=disconnections, injection_sets=injection_sets
    )


def task_to_dict(task: TopologyTask, grid: Grid) -> dict[str, Any]:
    return {
        "splits": [
            {
                "substation": grid.node_ids[grid.substations[sp.substation].node],
                "branch_assignment": list(sp.assignment),
            }
            for sp in task.splits
        ],
        "disconnections": [grid.branches[k].id for k in task.disconnections],
        "injection_sets": [list(row) for row in task.injection_sets],
    }


def read_tasks(path: str, grid: Grid) -> list[TopologyTask]:
    tasks = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
            tasks.append(task_from_dict(doc, grid))
    return tasks


def write_tasks(tasks: Iterable[TopologyTask], grid: Grid, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for task in tasks:
            fh.write(json.dumps(task_to_dict(task, grid)) + "\n")


def result_to_dict(result: SolveResult) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "metric": result.metric,
        "best_injection": result.best_injection,
        "feasible": result.diagnostics.feasible,
    }
    if result.report is not None:
        doc["n0_worst"] = [
            {"branch": b, "flow_mw": f, "rel_load": r} for b, f, r in result.report.n0_worst
        ]
        doc["n1_worst"] = [
            {"case": c, "branch": b, "flow_mw": f, "rel_load": r}
            for c, b, f, r in result.report.n1_worst
        ]
    diag: dict[str, Any] = {}
    if result.diagnostics.reason:
        diag["reason"] = result.diagnostics.reason
    if result.diagnostics.islanded_cases:
        diag["islanded_cases"] = list(result.diagnostics.islanded_cases)
    if diag:
        doc["diagnostics"] = diag
    return doc


def write_results(results: Iterable[SolveResult], stream: TextIO) -> None:
    for res in results:
        stream.write(json.dumps(result_to_dict(res)) + "\n")


def write_results_path(results: Iterable[SolveResult], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        write_results(results, fh)
