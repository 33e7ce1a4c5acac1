#!/usr/bin/env python3
"""Generate the committed test fixtures (deterministic, numpy only).

Outputs, all under tests/data/:

* case300.m / case300.json: synthetic 300-node benchmark with 411 branches,
  385 contingency cases, 15 switchable substations covering 75 branches, 11
  of them with reassignable injections.  The .m file carries the raw network
  (for the import path); the .json adds substations and contingencies.
* fixture_a.json: 12-node ring with a bridged appendage, so one single-branch
  case islands the grid already in the base topology.
* fixture_b.json: 20-node mesh, three substations with injections, multi
  branch and injection cases, no bridges.

The script is standalone on purpose: fixtures must not depend on the package
they test.  Regenerate with `python3 tools/make_fixtures.py` from the repo
root; outputs are committed, and the script asserts the advertised dimensions
before writing anything.
"""

import json
import os
import numpy as np

OUT = os.path.join(os.path.dirname(__file__), "..", "tests", "data")

N_NODES = 300
N_BRANCHES = 411
N_HUBS = 15
N_INJ_HUBS = 11
N_SINGLE = 372
N_MULTI = 8
N_INJLOSS = 5


def dc_flows(n_nodes, branches, injections, slack):
    """Plain DC solve for rating calibration: branches (f, t, b), injections {node: mw}."""
    lap = np.zeros((n_nodes, n_nodes))
    for f, t, b in branches:
        lap[f, f] += b
        lap[t, t] += b
        lap[f, t] -= b
        lap[t, f] -= b
    p = np.zeros(n_nodes)
    for node, mw in injections.items():
        p[node] += mw
    keep = [i for i in range(n_nodes) if i != slack]
    theta = np.zeros(n_nodes)
    theta[keep] = np.linalg.solve(lap[np.ix_(keep, keep)], p[keep])
    return np.array([b * (theta[f] - theta[t]) for f, t, b in branches])


def connected_without(n_nodes, branches, dead):
    parent = list(range(n_nodes))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    comp = n_nodes
    for k, (f, t, _b) in enumerate(branches):
        if k in dead:
            continue
        rf, rt = find(f), find(t)
        if rf != rt:
            parent[rf] = rt
            comp -= 1
    return comp == 1


def make_case300(rng):
    # ring backbone keeps the graph bridge-free: every single outage stays connected
    edges = [(i, (i + 1) % N_NODES) for i in range(N_NODES)]
    hubs = sorted(int(h) for h in np.arange(12, 12 + 19 * N_HUBS, 19))
    assert len(hubs) == N_HUBS and hubs[-1] < N_NODES and 0 not in hubs
    hubset = set(hubs)
    used = {frozenset(e) for e in edges}

    def add_chord(a, pool):
        while True:
            b = int(pool[rng.integers(0, len(pool))])
            if b != a and frozenset((a, b)) not in used:
                used.add(frozenset((a, b)))
                edges.append((a, b))
                return

    non_hub = [i for i in range(N_NODES) if i not in hubset and i != 0]
    for h in hubs:  # hub degree: 2 ring edges + 3 chords = 5 branch elements
        for _ in range(3):
            add_chord(h, non_hub)
    while len(edges) < N_BRANCHES:
        a = int(non_hub[rng.integers(0, len(non_hub))])
        add_chord(a, non_hub)
    assert len(edges) == N_BRANCHES

    # reactances first so the .m -> susceptance conversion is exactly 1/x
    x_vals = np.round(rng.uniform(0.05, 0.45, size=N_BRANCHES), 6)
    susceptance = 1.0 / x_vals

    inj_hubs = hubs[:N_INJ_HUBS]
    load_pool = [i for i in non_hub if i != 0]
    load_nodes = sorted(int(i) for i in rng.choice(load_pool, size=130, replace=False))
    gen_pool = [i for i in load_pool if i not in set(load_nodes)]
    gen_nodes = sorted(int(i) for i in rng.choice(gen_pool, size=45, replace=False))

    loads = {n: -float(np.round(rng.uniform(10, 110), 3)) for n in load_nodes}
    for h in inj_hubs:  # one hub load joins the reassignable elements
        loads[h] = -float(np.round(rng.uniform(20, 80), 3))
    gens = {n: float(np.round(rng.uniform(30, 150), 3)) for n in gen_nodes}
    for h in inj_hubs:  # and one hub generator
        gens[h] = float(np.round(rng.uniform(40, 130), 3))
    total_load = -sum(loads.values())
    scale = total_load / sum(gens.values())
    gens = {n: float(np.round(p * scale, 3)) for n, p in gens.items()}

    injections = {}
    for n, p in loads.items():
        injections[n] = injections.get(n, 0.0) + p
    for n, p in gens.items():
        injections[n] = injections.get(n, 0.0) + p
    branches = [(f, t, b) for (f, t), b in zip(edges, susceptance)]
    flows = dc_flows(N_NODES, branches, injections, slack=0)
    ratings = np.round(np.maximum(25.0, 1.25 * np.abs(flows) + 15.0), 1)

    # MATPOWER tables; bus ids are 1-based
    bus_rows = []
    for i in range(N_NODES):
        btype = 3 if i == 0 else (2 if i in gens else 1)
        pd = -loads.get(i, 0.0)
        bus_rows.append(f" {i+1} {btype} {pd} 0 0 0 1 1 0 135 1 1.05 0.95;")
    gen_rows = []
    gen_order = sorted(gens)
    for n in gen_order:
        gen_rows.append(f" {n+1} {gens[n]} 0 300 -300 1 100 1 400 0;")
    branch_rows = []
    for k, ((f, t), x) in enumerate(zip(edges, x_vals)):
        branch_rows.append(
            f" {f+1} {t+1} 0 {x} 0 {ratings[k]} 0 0 0 0 1 -360 360;"
        )
    case_m = (
        "function mpc = case300synth\n"
        "% Synthetic 300-node benchmark for batch topology screening tests.\n"
        "% Generated by tools/make_fixtures.py; do not edit by hand.\n"
        "mpc.version = '2';\n"
        "mpc.baseMVA = 100;\n"
        "mpc.bus = [\n" + "\n".join(bus_rows) + "\n];\n"
        "mpc.gen = [\n" + "\n".join(gen_rows) + "\n];\n"
        "mpc.branch = [\n" + "\n".join(branch_rows) + "\n];\n"
    )

    # native JSON, ids matching what the importer produces
    node_ids = [str(i + 1) for i in range(N_NODES)]
    branch_ids = [f"br{k}_{f+1}_{t+1}" for k, (f, t) in enumerate(edges)]
    inj_docs = []
    for i in range(N_NODES):  # loads first, bus order (importer convention)
        if i in loads:
            inj_docs.append({"id": f"load_{i+1}", "node": str(i + 1), "p_mw": loads[i]})
    for g, n in enumerate(gen_order):
        inj_docs.append({"id": f"gen{g}_{n+1}", "node": str(n + 1), "p_mw": gens[n]})
    inj_id_at = {}
    for d in inj_docs:
        inj_id_at.setdefault(d["node"], []).append(d["id"])

    incident = {h: [] for h in hubs}
    for k, (f, t) in enumerate(edges):
        if f in incident:
            incident[f].append(k)
        if t in incident:
            incident[t].append(k)
    substations = []
    for h in hubs:
        assert len(incident[h]) == 5
        sub = {
            "node": str(h + 1),
            "branch_elements": [branch_ids[k] for k in incident[h]],
            "injection_elements": inj_id_at[str(h + 1)] if h in inj_hubs else [],
        }
        substations.append(sub)
    n_elements = sum(len(s["branch_elements"]) for s in substations)
    assert n_elements == 75
    assert sum(1 for s in substations if s["injection_elements"]) == N_INJ_HUBS

    contingencies = []
    single_picks = [int(k) for k in rng.permutation(N_BRANCHES)[:N_SINGLE]]
    for k in sorted(single_picks):
        contingencies.append(
            {"id": f"n1_{branch_ids[k]}", "kind": "single_branch", "branches": [branch_ids[k]]}
        )
    chords = list(range(N_NODES, N_BRANCHES))
    multi = 0
    while multi < N_MULTI:
        pick = sorted(int(c) for c in rng.choice(chords, size=2, replace=False))
        if connected_without(N_NODES, branches, set(pick)):
            contingencies.append(
                {
                    "id": f"multi_{multi}",
                    "kind": "multi_branch",
                    "branches": [branch_ids[k] for k in pick],
                }
            )
            multi += 1
    loss_targets = [f"gen{gen_order.index(h)}_{h+1}" for h in inj_hubs[:2]]
    big_gens = sorted(gens, key=lambda n: -gens[n])
    loss_targets += [f"gen{gen_order.index(n)}_{n+1}" for n in big_gens[:N_INJLOSS - 2] if n not in inj_hubs[:2]]
    for inj_id in loss_targets[:N_INJLOSS]:
        contingencies.append({"id": f"loss_{inj_id}", "kind": "injection", "injection": inj_id})
    assert len(contingencies) == 385

    doc = {
        "nodes": [{"id": nid} for nid in node_ids],
        "branches": [
            {
                "id": branch_ids[k],
                "from": str(edges[k][0] + 1),
                "to": str(edges[k][1] + 1),
                "susceptance": susceptance[k],
                "rating": float(ratings[k]),
                "monitored": True,
            }
            for k in range(N_BRANCHES)
        ],
        "injections": inj_docs,
        "slack": "1",
        "substations": substations,
        "contingencies": contingencies,
    }
    return case_m, doc


def make_fixture_a(rng):
    """12-node ring plus chords plus a bridged two-node appendage."""
    edges = [(i, (i + 1) % 10) for i in range(10)]
    edges += [(0, 4), (2, 7), (5, 9), (1, 6)]
    edges += [(3, 10), (10, 11)]  # the bridge chain: cases on it island the grid
    b = np.round(rng.uniform(2.0, 9.0, size=len(edges)), 4)
    branch_ids = [f"e{k}" for k in range(len(edges))]
    nodes = [f"n{i}" for i in range(12)]
    injections = [
        {"id": "g2", "node": "n2", "p_mw": 70.0},
        {"id": "g5", "node": "n5", "p_mw": 55.0},
        {"id": "l7", "node": "n7", "p_mw": -60.0},
        {"id": "l9", "node": "n9", "p_mw": -35.0},
        {"id": "l11", "node": "n11", "p_mw": -30.0},
    ]
    substations = [
        {"node": "n2", "branch_elements": ["e1", "e2", "e11"], "injection_elements": ["g2"]},
        {"node": "n5", "branch_elements": ["e4", "e5", "e12"], "injection_elements": ["g5"]},
    ]
    contingencies = [
        {"id": "n1_e0", "kind": "single_branch", "branches": ["e0"]},
        {"id": "n1_e3", "kind": "single_branch", "branches": ["e3"]},
        {"id": "n1_e8", "kind": "single_branch", "branches": ["e8"]},
        {"id": "n1_e10", "kind": "single_branch", "branches": ["e10"]},
        {"id": "n1_e14", "kind": "single_branch", "branches": ["e14"]},  # bridge: islands
        {"id": "pair_chords", "kind": "multi_branch", "branches": ["e11", "e13"]},
        {"id": "loss_g5", "kind": "injection", "injection": "g5"},
    ]
    return {
        "nodes": [{"id": n} for n in nodes],
        "branches": [
            {
                "id": branch_ids[k],
                "from": f"n{edges[k][0]}",
                "to": f"n{edges[k][1]}",
                "susceptance": float(b[k]),
                "rating": 70.0,
                "monitored": True,
            }
            for k in range(len(edges))
        ],
        "injections": injections,
        "slack": "n0",
        "substations": substations,
        "contingencies": contingencies,
    }


def make_fixture_b(rng):
    """20-node mesh, no bridges, three substations with injections."""
    n = 20
    edges = [(i, (i + 1) % n) for i in range(n)]
    edges += [(0, 10), (2, 13), (4, 16), (6, 18), (3, 9), (7, 14), (11, 17), (5, 12)]
    b = np.round(rng.uniform(1.5, 10.0, size=len(edges)), 4)
    branch_ids = [f"b{k}" for k in range(len(edges))]
    loads = {1: -45.0, 8: -70.0, 9: -40.0, 15: -55.0, 19: -25.0}
    gens = {3: 80.0, 7: 95.0, 13: 60.0}
    injections = []
    for node in sorted(loads):
        injections.append({"id": f"l{node}", "node": f"m{node}", "p_mw": loads[node]})
    for node in sorted(gens):
        injections.append({"id": f"g{node}", "node": f"m{node}", "p_mw": gens[node]})
    incident = {3: [], 7: [], 13: []}
    for k, (f, t) in enumerate(edges):
        if f in incident:
            incident[f].append(k)
        if t in incident:
            incident[t].append(k)
    substations = [
        {
            "node": f"m{h}",
            "branch_elements": [branch_ids[k] for k in incident[h]],
            "injection_elements": [f"g{h}"],
        }
        for h in (3, 7, 13)
    ]
    contingencies = []
    for k in (1, 5, 9, 14, 20, 22, 25, 27):
        contingencies.append(
            {"id": f"n1_{branch_ids[k]}", "kind": "single_branch", "branches": [branch_ids[k]]}
        )
    contingencies.append({"id": "duo_a", "kind": "multi_branch", "branches": ["b21", "b24"]})
    contingencies.append({"id": "trio", "kind": "multi_branch", "branches": ["b2", "b23", "b26"]})
    contingencies.append({"id": "loss_g7", "kind": "injection", "injection": "g7"})
    contingencies.append({"id": "loss_l8", "kind": "injection", "injection": "l8"})
    return {
        "nodes": [{"id": f"m{i}"} for i in range(n)],
        "branches": [
            {
                "id": branch_ids[k],
                "from": f"m{edges[k][0]}",
                "to": f"m{edges[k][1]}",
                "susceptance": float(b[k]),
                "rating": 90.0,
                "monitored": k % 7 != 3,  # a few unmonitored rows keep that path honest
            }
            for k in range(len(edges))
        ],
        "injections": injections,
        "slack": "m0",
        "substations": substations,
        "contingencies": contingencies,
    }


def main():
    os.makedirs(OUT, exist_ok=True)
    rng = np.random.default_rng(300411)
    case_m, case_doc = make_case300(rng)
    with open(os.path.join(OUT, "case300.m"), "w") as fh:
        fh.write(case_m)
    with open(os.path.join(OUT, "case300.json"), "w") as fh:
        json.dump(case_doc, fh, indent=1)
        fh.write("\n")
    with open(os.path.join(OUT, "fixture_a.json"), "w") as fh:
        json.dump(make_fixture_a(np.random.default_rng(12)), fh, indent=1)
        fh.write("\n")
    with open(os.path.join(OUT, "fixture_b.json"), "w") as fh:
        json.dump(make_fixture_b(np.random.default_rng(20)), fh, indent=1)
        fh.write("\n")
    print("fixtures written to", os.path.normpath(OUT))


if __name__ == "__main__":
    main()
