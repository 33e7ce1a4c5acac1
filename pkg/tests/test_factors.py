import itertools

import numpy as np
import pytest

from batchdc import (
    Branch,
    DegenerateSplit,
    DisconnectedTopology,
    Injection,
    InvalidReduction,
    IslandingError,
    SingularSplit,
    SplitAction,
    TopologyTask,
    ValidationError,
    apply_bsdf,
    apply_modf_to_flows,
    apply_modf_to_ptdf,
    apply_outage_to_flows,
    apply_outage_to_ptdf,
    build_grid,
    column_power,
    compute_bsdf,
    compute_modf,
    compute_ptdf,
    lodf_column,
    n0_delta,
    n0_flows,
    prepare_base_ptdf,
    reduce_static,
    split_columns,
    validate_ptdf,
)
from batchdc.factors import PtdfMatrix
from batchdc.grid import static_injection_fold
from batchdc.oracle import flows_from_scratch, materialize


def triangle():
    return build_grid(
        node_ids=["n0", "n1", "n2"],
        branches=[
            Branch(id="e01", from_node=0, to_node=1, susceptance=10.0, rating=100.0),
            Branch(id="e12", from_node=1, to_node=2, susceptance=10.0, rating=100.0),
            Branch(id="e02", from_node=0, to_node=2, susceptance=10.0, rating=100.0),
        ],
        injections=[Injection(id="load2", node=2, setpoint=-90.0)],
        slack=0,
    )


def chain3():
    return build_grid(
        node_ids=["n0", "n1", "n2"],
        branches=[
            Branch(id="e01", from_node=0, to_node=1, susceptance=5.0, rating=100.0),
            Branch(id="e12", from_node=1, to_node=2, susceptance=5.0, rating=100.0),
        ],
        injections=[Injection(id="load2", node=2, setpoint=-40.0)],
        slack=0,
    )


def square():
    return build_grid(
        node_ids=["n0", "n1", "n2", "n3"],
        branches=[
            Branch(id="e01", from_node=0, to_node=1, susceptance=4.0, rating=100.0),
            Branch(id="e12", from_node=1, to_node=2, susceptance=4.0, rating=100.0),
            Branch(id="e23", from_node=2, to_node=3, susceptance=4.0, rating=100.0),
            Branch(id="e30", from_node=3, to_node=0, susceptance=4.0, rating=100.0),
        ],
        injections=[Injection(id="load2", node=2, setpoint=-60.0)],
        slack=0,
    )


def all_home_power(grid):
    nodal = np.zeros(grid.n_nodes)
    for inj in grid.injections:
        nodal[inj.node] += inj.setpoint
    return nodal


# PTDF of the symmetric triangle: a unit injection at either non-slack node
# returns two thirds over the direct branch, one third over the detour.
TRIANGLE_PTDF = np.array(
    [
        [0.0, -2.0 / 3.0, -1.0 / 3.0],
        [0.0, 1.0 / 3.0, -1.0 / 3.0],
        [0.0, -1.0 / 3.0, -2.0 / 3.0],
    ]
)


def test_triangle_ptdf_hand_values():
    ptdf = compute_ptdf(triangle())
    np.testing.assert_allclose(ptdf.values, TRIANGLE_PTDF, atol=1e-12)
    assert ptdf.slack_col == 0
    assert ptdf.static_col is None
    assert list(ptdf.row_branches) == [0, 1, 2]
    validate_ptdf(ptdf)


def test_triangle_flows_hand_values():
    grid = triangle()
    ptdf = compute_ptdf(grid)
    flows = n0_flows(ptdf, column_power(ptdf, {2: -90.0}))
    np.testing.assert_allclose(flows, [30.0, 30.0, 60.0], atol=1e-9)


def test_retained_rows_subset():
    grid = triangle()
    ptdf = compute_ptdf(grid, retained_rows=[2, 0])
    assert list(ptdf.row_branches) == [2, 0]
    assert ptdf.branch_rows[1] == -1
    with pytest.raises(ValidationError):
        ptdf.row_of(1)
    np.testing.assert_allclose(ptdf.values, TRIANGLE_PTDF[[2, 0], :], atol=1e-12)
    with pytest.raises(ValidationError, match="duplicate"):
        compute_ptdf(grid, retained_rows=[0, 0])


def test_triangle_lodf_hand_values():
    grid = triangle()
    ptdf = compute_ptdf(grid)
    col = lodf_column(ptdf, 2)
    assert col[2] == -1.0  # exact by construction
    np.testing.assert_allclose(col, [1.0, 1.0, -1.0], atol=1e-12)
    flows = n0_flows(ptdf, column_power(ptdf, {2: -90.0}))
    post = apply_outage_to_flows(flows, col, 2)
    assert post[2] == 0.0  # exact zero, not roundoff
    np.testing.assert_allclose(post, [90.0, 90.0, 0.0], atol=1e-9)


def test_lodf_islanding_on_bridge():
    ptdf = compute_ptdf(chain3())
    with pytest.raises(IslandingError) as exc:
        lodf_column(ptdf, 1)
    assert exc.value.branches == (1,)


def test_outage_update_matches_refactorization():
    grid = square()
    ptdf = compute_ptdf(grid)
    col = lodf_column(ptdf, 1)
    updated = apply_outage_to_ptdf(ptdf, col, 1)
    assert updated.applied_updates == (("outage", 1),)
    assert np.all(updated.values[1, :] == 0.0)

    alive = build_grid(
        node_ids=["n0", "n1", "n2", "n3"],
        branches=[grid.branches[0], grid.branches[2], grid.branches[3]],
        injections=list(grid.injections),
        slack=0,
    )
    ref = compute_ptdf(alive)
    np.testing.assert_allclose(updated.values[[0, 2, 3], :], ref.values, atol=1e-9)


def test_modf_single_equals_lodf():
    ptdf = compute_ptdf(square())
    for k in range(4):
        modf = compute_modf(ptdf, [k])
        np.testing.assert_allclose(modf.values[:, 0], lodf_column(ptdf, k), atol=1e-12)


def test_modf_pair_matches_sequential_lodf(grid_b):
    ptdf = compute_ptdf(grid_b)
    nodal = all_home_power(grid_b)
    flows = n0_flows(ptdf, column_power(ptdf, nodal))
    rng = np.random.default_rng(7)
    checked = 0
    while checked < 10:
        k1, k2 = (int(x) for x in rng.choice(grid_b.n_branches, size=2, replace=False))
        try:
            modf = compute_modf(ptdf, [k1, k2])
            col1 = lodf_column(ptdf, k1)
            step1 = apply_outage_to_ptdf(ptdf, col1, k1)
            col2 = lodf_column(step1, k2)
        except IslandingError:
            continue
        seq = apply_outage_to_flows(apply_outage_to_flows(flows, col1, k1), col2, k2)
        par = apply_modf_to_flows(flows, modf)
        np.testing.assert_allclose(par, seq, atol=1e-9)
        assert par[k1] == 0.0 and par[k2] == 0.0
        # the permanent-update route must agree as well
        two = apply_modf_to_ptdf(ptdf, modf)
        chained = apply_outage_to_ptdf(step1, col2, k2)
        np.testing.assert_allclose(two.values, chained.values, atol=1e-9)
        checked += 1


def test_modf_rejects_duplicates_and_islands():
    ptdf = compute_ptdf(square())
    with pytest.raises(ValidationError, match="duplicate"):
        compute_modf(ptdf, [1, 1])
    with pytest.raises(IslandingError) as exc:
        compute_modf(ptdf, [1, 2])  # both branches at n2
    assert set(exc.value.branches) == {1, 2}


def test_modf_outaged_rows_are_pinned():
    ptdf = compute_ptdf(split_grid())
    modf = compute_modf(ptdf, [1, 3])
    for i, r in enumerate(modf.rows):
        row = modf.values[r, :].copy()
        assert row[i] == -1.0
        row[i] = 0.0
        assert np.all(row == 0.0)


def split_grid():
    """fixture_a clone is overkill here; a 5-node mesh with one substation."""
    branches = [
        Branch(id="e0", from_node=0, to_node=1, susceptance=8.0, rating=100.0),
        Branch(id="e1", from_node=1, to_node=2, susceptance=6.0, rating=100.0),
        Branch(id="e2", from_node=2, to_node=3, susceptance=7.0, rating=100.0),
        Branch(id="e3", from_node=3, to_node=4, susceptance=9.0, rating=100.0),
        Branch(id="e4", from_node=4, to_node=0, susceptance=5.0, rating=100.0),
        Branch(id="e5", from_node=1, to_node=3, susceptance=4.0, rating=100.0),
        Branch(id="e6", from_node=1, to_node=4, susceptance=3.0, rating=100.0),
    ]
    injections = [
        Injection(id="g1", node=1, setpoint=50.0),
        Injection(id="l2", node=2, setpoint=-30.0),
        Injection(id="l3", node=3, setpoint=-20.0),
    ]
    from batchdc import SplittableSubstation

    subs = [
        SplittableSubstation(
            node=1, branch_elements=(0, 1, 5, 6), injection_elements=(0,)
        )
    ]
    return build_grid(
        node_ids=[f"n{i}" for i in range(5)],
        branches=branches,
        injections=injections,
        slack=0,
        substations=subs,
    )


def test_bsdf_matches_refactorization_all_assignments():
    grid = split_grid()
    sub = grid.substations[0]
    base = compute_ptdf(grid)
    nodal = all_home_power(grid)
    n_el = len(sub.branch_elements)
    tried = failed = 0
    for assignment in itertools.product([False, True], repeat=n_el):
        if not any(assignment) or all(assignment):
            continue
        task = TopologyTask(
            splits=(SplitAction(substation=0, assignment=assignment),),
            injection_sets=((False,),),
        )
        try:
            upd = compute_bsdf(base, grid, sub, assignment)
            ptdf2 = apply_bsdf(base, upd)
            flows = n0_flows(ptdf2, column_power(ptdf2, nodal))
            engine_ok = True
        except SingularSplit:
            engine_ok = False
        try:
            setup = materialize(grid, task)
            ref = flows_from_scratch(setup.topology, setup.powers)[:, 0]
            oracle_ok = True
        except DisconnectedTopology:
            oracle_ok = False
        assert engine_ok == oracle_ok
        tried += 1
        if not engine_ok:
            failed += 1
            continue
        np.testing.assert_allclose(flows, ref, atol=1e-9)
    assert tried == 2**n_el - 2
    assert failed < tried  # at least one proper split must succeed


def test_bsdf_moved_injection_matches_refactorization():
    grid = split_grid()
    sub = grid.substations[0]
    base = compute_ptdf(grid)
    assignment = (True, False, True, False)  # e0 and e5 move to the new busbar
    upd = compute_bsdf(base, grid, sub, assignment)
    ptdf2 = apply_bsdf(base, upd)
    new_col = split_columns(ptdf2)[sub.node]

    nodal = all_home_power(grid)
    nodal[grid.injections[0].node] -= grid.injections[0].setpoint
    p = column_power(ptdf2, nodal)
    p[new_col] += grid.injections[0].setpoint  # generator follows the split
    flows = n0_flows(ptdf2, p)

    task = TopologyTask(
        splits=(SplitAction(substation=0, assignment=assignment),),
        injection_sets=((True,),),
    )
    setup = materialize(grid, task)
    ref = flows_from_scratch(setup.topology, setup.powers)[:, 0]
    np.testing.assert_allclose(flows, ref, atol=1e-9)


def test_bsdf_bookkeeping_after_apply():
    grid = split_grid()
    sub = grid.substations[0]
    base = compute_ptdf(grid)
    assignment = (False, True, True, False)
    upd = compute_bsdf(base, grid, sub, assignment)
    ptdf2 = apply_bsdf(base, upd)
    assert ptdf2.n_cols == base.n_cols + 1
    assert ptdf2.applied_updates[-1][:3] == ("split", sub.node, upd.new_col)
    for k in upd.moved:
        r = ptdf2.row_of(k)
        assert upd.new_col in (int(ptdf2.from_cols[r]), int(ptdf2.to_cols[r]))
    for k in sub.branch_elements:
        if k in upd.moved:
            continue
        r = ptdf2.row_of(k)
        a = int(base.node_cols[sub.node])
        assert a in (int(ptdf2.from_cols[r]), int(ptdf2.to_cols[r]))
    validate_ptdf(ptdf2)


def test_bsdf_identity_and_degenerate():
    grid = split_grid()
    sub = grid.substations[0]
    base = compute_ptdf(grid)
    upd = compute_bsdf(base, grid, sub, (False, False, False, False))
    assert upd.identity
    assert apply_bsdf(base, upd) is base
    with pytest.raises(DegenerateSplit):
        compute_bsdf(base, grid, sub, (True, True, True, True))
    with pytest.raises(ValidationError, match="bits"):
        compute_bsdf(base, grid, sub, (True,))


def test_bsdf_singular_split_detached_half():
    # n1 is an articulation point: moving the whole right half off the busbar
    # cuts the coupler path and must be flagged, not silently solved.
    branches = [
        Branch(id="w", from_node=0, to_node=1, susceptance=5.0, rating=100.0),
        Branch(id="r1", from_node=1, to_node=2, susceptance=5.0, rating=100.0),
        Branch(id="r2", from_node=1, to_node=3, susceptance=5.0, rating=100.0),
        Branch(id="r3", from_node=2, to_node=3, susceptance=5.0, rating=100.0),
    ]
    from batchdc import SplittableSubstation

    grid = build_grid(
        node_ids=["n0", "n1", "n2", "n3"],
        branches=branches,
        injections=[Injection(id="l3", node=3, setpoint=-10.0)],
        slack=0,
        substations=[
            SplittableSubstation(node=1, branch_elements=(0, 1, 2), injection_elements=())
        ],
    )
    base = compute_ptdf(grid)
    with pytest.raises(SingularSplit):
        compute_bsdf(base, grid, sub := grid.substations[0], (False, True, True))
    # sanity: the same grid accepts a non-separating assignment
    upd = compute_bsdf(base, grid, sub, (False, True, False))
    assert not upd.identity


def test_fold_preserves_flows(grid_300):
    unfolded = compute_ptdf(grid_300)
    nodal = all_home_power(grid_300)
    ref = n0_flows(unfolded, column_power(unfolded, nodal))

    folded = prepare_base_ptdf(grid_300)
    fold = static_injection_fold(grid_300)
    eff = nodal.copy()
    eff[list(fold.static_nodes)] = 0.0
    got = n0_flows(folded, column_power(folded, eff))
    np.testing.assert_allclose(got, ref, atol=1e-9)
    assert folded.static_col == folded.n_cols - 1
    assert folded.n_cols < unfolded.n_cols


def test_fold_guards():
    grid = split_grid()
    base = compute_ptdf(grid)
    folded = prepare_base_ptdf(grid)
    with pytest.raises(InvalidReduction, match="already"):
        reduce_static(folded, grid, (), np.zeros(grid.n_nodes))
    col = lodf_column(base, 2)
    updated = apply_outage_to_ptdf(base, col, 2)
    with pytest.raises(InvalidReduction, match="unmodified"):
        reduce_static(updated, grid, (), np.zeros(grid.n_nodes))
    with pytest.raises(InvalidReduction, match="required"):
        reduce_static(base, grid, (grid.slack,), np.zeros(grid.n_nodes))
    with pytest.raises(ValidationError, match="one entry per node"):
        reduce_static(base, grid, (), np.zeros(2))


def test_folded_column_power_guards(base_300, grid_300):
    folded_nodes = [i for i in range(grid_300.n_nodes) if base_300.node_cols[i] < 0]
    assert folded_nodes
    with pytest.raises(ValidationError, match="folded"):
        column_power(base_300, {folded_nodes[0]: 5.0})
    p = column_power(base_300)
    assert p[base_300.static_col] == 1.0
    p[base_300.static_col] = 0.0
    with pytest.raises(ValidationError, match="static"):
        n0_flows(base_300, p)
    with pytest.raises(ValidationError, match="shape"):
        n0_flows(base_300, np.zeros(3))
    with pytest.raises(ValidationError, match="folded"):
        n0_delta(base_300, np.zeros(base_300.n_rows), {folded_nodes[0]: 5.0})


def test_n0_delta_matches_recompute():
    grid = triangle()
    ptdf = compute_ptdf(grid)
    base = n0_flows(ptdf, column_power(ptdf, {2: -90.0}))
    shifted = n0_delta(ptdf, base, {1: 25.0, 2: -5.0})
    direct = n0_flows(ptdf, column_power(ptdf, {1: 25.0, 2: -95.0}))
    np.testing.assert_allclose(shifted, direct, atol=1e-12)


def test_validate_ptdf_catches_corruption(base_300):
    bad = PtdfMatrix(
        values=base_300.values.copy(),
        row_branches=base_300.row_branches,
        branch_rows=base_300.branch_rows,
        node_cols=base_300.node_cols,
        from_cols=base_300.from_cols,
        to_cols=base_300.to_cols,
        slack_col=base_300.slack_col,
        static_col=base_300.static_col,
        col_origin=base_300.col_origin,
    )
    ok_col = 0 if base_300.slack_col != 0 else 1
    bad.values[0, ok_col] = 1.5
    with pytest.raises(ValidationError, match="out of"):
        validate_ptdf(bad)
    bad.values[0, ok_col] = 0.0
    bad.values[3, base_300.slack_col] = 1e-15
    with pytest.raises(ValidationError, match="slack"):
        validate_ptdf(bad)
