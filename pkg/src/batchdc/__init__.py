"""batchdc: batch DC loadflow engine for grid topology screening.

Factorize once, then reach thousands of candidate topologies (busbar splits,
branch disconnections, injection reassignments) through low-rank PTDF updates
with full N-1 coverage.
"""

from .errors import (
    BatchDcError,
    DegenerateSplit,
    DisconnectedTopology,
    InvalidReduction,
    IslandingError,
    ParseError,
    SingularSplit,
    SingularSystem,
    UnsupportedFeature,
    ValidationError,
)
from .factors import (
    BsdfUpdate,
    ModfMatrix,
    PtdfMatrix,
    apply_bsdf,
    apply_modf_to_flows,
    apply_modf_to_ptdf,
    apply_outage_to_flows,
    apply_outage_to_ptdf,
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
from .grid import (
    Branch,
    ContingencyCase,
    Grid,
    Injection,
    SplittableSubstation,
    build_grid,
    replace_stub_branches,
    static_injection_fold,
)
from .io import (
    grid_from_dict,
    grid_to_dict,
    load_grid,
    read_tasks,
    result_to_dict,
    save_grid,
    task_from_dict,
    task_to_dict,
    write_results,
    write_tasks,
)
from .matpower import grid_from_matpower, load_matpower, parse_matpower
from .solver import (
    Instrumentation,
    SolveConfig,
    SolveResult,
    SparseReport,
    SplitAction,
    TopologyTask,
    agg_i,
    agg_m,
    candidate_case_flows,
    canonicalize_task,
    dedupe_symmetric_injections,
    solve_batch,
)
from .tree import SplitTree, build_tree, execute_tree

__version__ = "0.1.0"

__all__ = [
    "BatchDcError",
    "Branch",
    "BsdfUpdate",
    "ContingencyCase",
    "DegenerateSplit",
    "DisconnectedTopology",
    "Grid",
    "Injection",
    "Instrumentation",
    "InvalidReduction",
    "IslandingError",
    "ModfMatrix",
    "ParseError",
    "PtdfMatrix",
    "SingularSplit",
    "SingularSystem",
    "SolveConfig",
    "SolveResult",
    "SparseReport",
    "SplitAction",
    "SplitTree",
    "SplittableSubstation",
    "TopologyTask",
    "UnsupportedFeature",
    "ValidationError",
    "agg_i",
    "agg_m",
    "apply_bsdf",
    "apply_modf_to_flows",
    "apply_modf_to_ptdf",
    "apply_outage_to_flows",
    "apply_outage_to_ptdf",
    "build_grid",
    "build_tree",
    "candidate_case_flows",
    "canonicalize_task",
    "column_power",
    "compute_bsdf",
    "compute_modf",
    "compute_ptdf",
    "dedupe_symmetric_injections",
    "execute_tree",
    "grid_from_dict",
    "grid_from_matpower",
    "grid_to_dict",
    "load_grid",
    "load_matpower",
    "lodf_column",
    "n0_delta",
    "n0_flows",
    "parse_matpower",
    "prepare_base_ptdf",
    "read_tasks",
    "reduce_static",
    "replace_stub_branches",
    "result_to_dict",
    "save_grid",
    "solve_batch",
    "split_columns",
    "static_injection_fold",
    "task_from_dict",
    "task_to_dict",
    "validate_ptdf",
    "write_results",
    "write_tasks",
]
