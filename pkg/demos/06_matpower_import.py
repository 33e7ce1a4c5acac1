"""
Importing a MATPOWER case
=========================
"""

import tempfile
from pathlib import Path

from batchdc import load_matpower, prepare_base_ptdf, save_grid

DATA = Path(__file__).resolve().parent.parent / "tests" / "data"

# type-2/3 gens become positive injections, Pd columns negative ones;
# out-of-service rows (BR_STATUS/GEN_STATUS zero) are dropped on import
grid = load_matpower(str(DATA / "case300.m"))
print("nodes:", grid.n_nodes)
print("branches:", grid.n_branches)
print("injections:", len(grid.injections))
print("slack bus:", grid.node_ids[grid.slack])

gen_mw = sum(i.setpoint for i in grid.injections if i.setpoint > 0)
load_mw = -sum(i.setpoint for i in grid.injections if i.setpoint < 0)
print(f"generation {gen_mw:.1f} MW vs load {load_mw:.1f} MW")

# the native JSON format round-trips substations and contingencies too;
# a fresh import carries none, so this file holds the plain network
out = Path(tempfile.gettempdir()) / "case300_native.json"
save_grid(grid, str(out))
print("saved native grid to", out)

full = prepare_base_ptdf(grid, fold_static=False)
base = prepare_base_ptdf(grid)
print("full PTDF:", full.values.shape)
# with no substations or contingencies declared yet, every injection is
# static and the fold collapses the whole network into one flow column
print("folded base PTDF:", base.values.shape)

# the same conversion is scriptable:  batchdc import case300.m grid.json
