"""
Base-case DC flows from a hand-built grid
=========================================

Build a five-node grid, factorize it once, and read branch flows
straight off the PTDF.
"""

import numpy as np

from batchdc import (
    Branch,
    Injection,
    build_grid,
    column_power,
    compute_ptdf,
    n0_flows,
)

# a ring with one chord, 100 MW moving from node 1 to nodes 2 and 4
grid = build_grid(
    node_ids=["a", "b", "c", "d", "e"],
    branches=[
        Branch(id="ab", from_node=0, to_node=1, susceptance=10.0, rating=120.0),
        Branch(id="bc", from_node=1, to_node=2, susceptance=10.0, rating=120.0),
        Branch(id="cd", from_node=2, to_node=3, susceptance=10.0, rating=120.0),
        Branch(id="de", from_node=3, to_node=4, susceptance=10.0, rating=120.0),
        Branch(id="ea", from_node=4, to_node=0, susceptance=10.0, rating=120.0),
        Branch(id="bd", from_node=1, to_node=3, susceptance=5.0, rating=60.0),
    ],
    injections=[
        Injection(id="gen_b", node=1, setpoint=100.0),
        Injection(id="load_c", node=2, setpoint=-60.0),
        Injection(id="load_e", node=4, setpoint=-40.0),
    ],
    slack=0,
)

ptdf = compute_ptdf(grid)
print("PTDF shape:", ptdf.values.shape)
print("slack column is identically zero:", bool(np.all(ptdf.values[:, ptdf.slack_col] == 0)))

# flows = PTDF @ nodal power
nodal = np.zeros(grid.n_nodes)
for inj in grid.injections:
    nodal[inj.node] += inj.setpoint
flows = n0_flows(ptdf, column_power(ptdf, nodal))

print("\nbranch flows (MW):")
for br, f in zip(grid.branches, flows):
    print(f"  {br.id}: {f:8.2f}   ({abs(f) / br.rating:5.1%} of rating)")

# power balances at every node; the slack absorbs the residual
balance = np.zeros(grid.n_nodes)
for k, br in enumerate(grid.branches):
    balance[br.from_node] += flows[k]
    balance[br.to_node] -= flows[k]
print("\nworst nodal imbalance away from slack:",
      float(np.max(np.abs((balance - nodal)[1:]))))
