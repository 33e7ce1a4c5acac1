"""
Screening busbar splits with injection candidates
=================================================

Evaluate every proper split of one substation, each with all
combinations of generator placement, against full N-1.  The engine
applies each split as a rank-one PTDF update; nothing is refactorized.
"""

import itertools
from pathlib import Path

from batchdc import (
    SolveConfig,
    SplitAction,
    TopologyTask,
    load_grid,
    prepare_base_ptdf,
    solve_batch,
)

DATA = Path(__file__).resolve().parent.parent / "tests" / "data"

grid = load_grid(str(DATA / "fixture_b.json"))
base = prepare_base_ptdf(grid)

sub = grid.substations[0]
n_el = len(sub.branch_elements)
n_slots = len(grid.injection_slots)
print(f"substation at node {grid.node_ids[sub.node]} with {n_el} branch elements")

# all injection-placement candidates ride along with every branch topology
injection_sets = tuple(itertools.product([False, True], repeat=n_slots))

tasks = []
assignments = []
for bits in itertools.product([False, True], repeat=n_el):
    if not any(bits) or all(bits):
        continue  # no-op and busbar-emptying assignments are skipped
    assignments.append(bits)
    tasks.append(
        TopologyTask(
            splits=(SplitAction(substation=0, assignment=bits),),
            injection_sets=injection_sets,
        )
    )

results = solve_batch(grid, base, tasks, SolveConfig(mode="metric_first"))

print(f"\n{len(tasks)} branch topologies x {len(injection_sets)} injection candidates")
print("assignment        best metric   best injection set")
ranked = sorted(zip(assignments, results), key=lambda ar: ar[1].metric)
for bits, res in ranked:
    moved = [grid.branches[k].id for k, b in zip(sub.branch_elements, bits) if b]
    best_bits = tuple(int(b) for b in injection_sets[res.best_injection])
    print(f"  move {str(moved):18s} {res.metric:8.4f}   {best_bits}")

best_bits, best = ranked[0]
print("\nwinner's worst post-contingency loadings:")
for case_id, branch_id, flow, rel in best.report.n1_worst[:5]:
    print(f"  {case_id:10s} {branch_id:5s} {flow:9.2f} MW  {rel:6.1%}")
