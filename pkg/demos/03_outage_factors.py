"""
Branch outages as flow redistributions
======================================

A single outage maps pre-outage flows to post-outage flows through one
distribution column; simultaneous outages use a small dense system.
Both are checked here against a fresh factorization of the reduced grid.
"""

from pathlib import Path

import numpy as np

from batchdc import (
    TopologyTask,
    apply_modf_to_flows,
    apply_outage_to_flows,
    column_power,
    compute_modf,
    compute_ptdf,
    load_grid,
    lodf_column,
    n0_flows,
)
from batchdc.oracle import flows_from_scratch, materialize

DATA = Path(__file__).resolve().parent.parent / "tests" / "data"
grid = load_grid(str(DATA / "fixture_b.json"))

ptdf = compute_ptdf(grid)
nodal = np.zeros(grid.n_nodes)
for inj in grid.injections:
    nodal[inj.node] += inj.setpoint
flows = n0_flows(ptdf, column_power(ptdf, nodal))

# single outage: one column, the outaged branch lands at exactly zero
k = int(grid.branch_index["b21"])
col = lodf_column(ptdf, k)
post = apply_outage_to_flows(flows, col, k)
print(f"outage of {grid.branches[k].id}:")
print("  self factor:", col[k])
print("  post-outage flow on it:", post[k])

setup = materialize(grid, TopologyTask())
ref = flows_from_scratch(setup.topology, setup.powers, dead_branches=[k])[:, 0]
print("  max deviation vs refactorization:", float(np.max(np.abs(post - ref))))

# simultaneous pair: same idea, 2x2 inner system
pair = [int(grid.branch_index["b21"]), int(grid.branch_index["b24"])]
modf = compute_modf(ptdf, pair)
post2 = apply_modf_to_flows(flows, modf)
ref2 = flows_from_scratch(setup.topology, setup.powers, dead_branches=pair)[:, 0]
print(f"\nsimultaneous outage of {[grid.branches[j].id for j in pair]}:")
print("  max deviation vs refactorization:", float(np.max(np.abs(post2 - ref2))))

# the 10 branches picking up the most flow
delta = np.abs(post2 - flows)
for r in np.argsort(-delta)[:10]:
    print(f"  {grid.branches[r].id:5s} {flows[r]:9.2f} -> {post2[r]:9.2f} MW")
