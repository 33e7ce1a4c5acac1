import numpy as np
import pytest

from batchdc import (
    ParseError,
    UnsupportedFeature,
    ValidationError,
    grid_from_matpower,
    load_matpower,
    parse_matpower,
)
from conftest import data_path

CASE = """\
function mpc = tiny
% a comment line
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
 1 3 0   0 0 0 1 1 0 135 1 1.05 0.95;
 2 1 50  0 0 0 1 1 0 135 1 1.05 0.95; % trailing comment
 3 2 0   0 0 0 1 1 0 135 1 1.05 0.95;
];
mpc.gen = [
 3 80 0 300 -300 1 100 1 200 0;
];
mpc.branch = [
 1 2 0 0.1  0 90 0 0 0 0 1 -360 360;
 2 3 0 0.2  0 90 0 0 0 0 1 -360 360;
 1 3 0 0.25 0 0  0 0 0 0 1 -360 360;
];
"""


def test_parse_tables_and_scalars():
    doc = parse_matpower(CASE)
    assert doc["bus"].shape == (3, 13)
    assert doc["gen"].shape == (1, 10)
    assert doc["branch"].shape == (3, 13)
    assert doc["baseMVA"] == 100.0


def test_import_basics():
    g = grid_from_matpower(CASE)
    assert g.node_ids == ("1", "2", "3")
    assert g.slack == 0
    by_id = {i.id: i for i in g.injections}
    assert by_id["load_2"].setpoint == -50.0
    assert by_id["gen0_3"].setpoint == 80.0
    assert g.branches[0].susceptance == 1.0 / 0.1
    assert g.branches[0].rating == 90.0
    assert g.branches[2].rating > 1e8  # zero rateA means unlimited


def test_out_of_service_branch_skipped():
    text = CASE.replace("1 3 0 0.25 0 0  0 0 0 0 1", "1 3 0 0.25 0 0  0 0 0 0 0")
    # dropping the third branch leaves a connected chain
    g = grid_from_matpower(text)
    assert g.n_branches == 2


def test_out_of_service_gen_skipped():
    text = CASE.replace("3 80 0 300 -300 1 100 1 200 0;", "3 80 0 300 -300 1 100 0 200 0;")
    g = grid_from_matpower(text)
    assert all(not i.id.startswith("gen") for i in g.injections)


def test_phase_shift_rejected():
    text = CASE.replace("1 2 0 0.1  0 90 0 0 0 0 1", "1 2 0 0.1  0 90 0 0 0 30 1")
    with pytest.raises(UnsupportedFeature, match="shift"):
        grid_from_matpower(text)


def test_nonpositive_reactance_rejected():
    text = CASE.replace("1 2 0 0.1 ", "1 2 0 -0.1")
    with pytest.raises(ValidationError):
        grid_from_matpower(text)


def test_slack_count_enforced():
    with pytest.raises(ValidationError, match="type-3"):
        grid_from_matpower(CASE.replace(" 1 3 0 ", " 1 1 0 "))
    with pytest.raises(ValidationError, match="type-3"):
        grid_from_matpower(CASE.replace(" 3 2 0 ", " 3 3 0 "))


def test_missing_table_is_parse_error():
    with pytest.raises(ParseError):
        grid_from_matpower("function mpc = nothing\nmpc.version = '2';\n")


def test_benchmark_file_matches_native_json(grid_300):
    gm = load_matpower(data_path("case300.m"))
    assert gm.node_ids == grid_300.node_ids
    assert gm.slack == grid_300.slack
    assert len(gm.branches) == len(grid_300.branches)
    for a, b in zip(gm.branches, grid_300.branches):
        assert a.id == b.id
        assert (a.from_node, a.to_node) == (b.from_node, b.to_node)
        assert a.susceptance == b.susceptance  # exact: both sides compute 1/x
        assert a.rating == b.rating
    got = {(i.id, i.node, i.setpoint) for i in gm.injections}
    want = {(i.id, i.node, i.setpoint) for i in grid_300.injections}
    assert got == want
