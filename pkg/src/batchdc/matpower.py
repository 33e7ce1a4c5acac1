"""MATPOWER case import.

Reads the ``mpc.bus`` / ``mpc.gen`` / ``mpc.branch`` tables of a MATPOWER .m
file and maps them onto the DC model:

* branch susceptance is 1/x, taking the series reactance only (resistance and
  tap ratio are irrelevant under the DC approximation used here),
* loads become negative injections, in-service generators positive ones,
* the single type-3 bus becomes the slack,
* RATE_A of 0 (MATPOWER for "unlimited") is mapped to a large finite rating.

Out-of-service branches and generators are dropped.  A ``mpc.dcline`` table or
a nonzero phase-shift angle raises UnsupportedFeature; x <= 0 raises
ValidationError.
"""

from __future__ import annotations

import re

import numpy as np

from .errors import ParseError, UnsupportedFeature, ValidationError
from .grid import Branch, Grid, Injection, build_grid

UNLIMITED_RATING = 1e9

_MATRIX_RE = re.compile(r"mpc\.(\w+)\s*=\s*\[(.*?)\];", re.DOTALL)
_SCALAR_RE = re.compile(r"mpc\.(\w+)\s*=\s*([0-9.eE+-]+)\s*;")


def _strip_comments(text: str) -> str:
    return "\n".join(line.split("%", 1)[0] for line in text.splitlines())


def _parse_matrix(body: str) -> np.ndarray:
    rows = []
    for chunk in body.replace(";", "\n").splitlines():
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            rows.append([float(tok) for tok in chunk.split()])
        except ValueError as exc:
            raise ParseError(f"bad numeric row in MATPOWER matrix: {chunk!r}") from exc
    if not rows:
        return np.zeros((0, 0))
    width = max(len(r) for r in rows)
    if any(len(r) != width for r in rows):
        raise ParseError("ragged MATPOWER matrix")
    return np.array(rows)


def parse_matpower(text: str) -> dict[str, np.ndarray]:
    """Extract mpc.* blocks as arrays, plus scalar fields like baseMVA."""
    clean = _strip_comments(text)
    tables: dict[str, np.ndarray] = {}
    for name, body in _MATRIX_RE.findall(clean):
        tables[name] = _parse_matrix(body)
    for name, value in _SCALAR_RE.findall(clean):
        if name not in tables:
            tables[name] = np.array(float(value))
    if "bus" not in tables or "branch" not in tables:
        raise ParseError("MATPOWER case lacks bus or branch table")
    return tables


def grid_from_matpower(text: str) -> Grid:
    """Convert MATPOWER case text to a validated Grid (no substations, no contingencies)."""
    tables = parse_matpower(text)
    if "dcline" in tables and tables["dcline"].size:
        raise UnsupportedFeature("mpc.dcline present; DC lines are not modelled")

    bus = tables["bus"]
    node_ids = [str(int(b)) for b in bus[:, 0]]
    index_of_bus = {int(b): i for i, b in enumerate(bus[:, 0])}
    if len(index_of_bus) != len(node_ids):
        raise ValidationError("duplicate bus numbers")

    slack_buses = np.flatnonzero(bus[:, 1] == 3)
    if len(slack_buses) != 1:
        raise ValidationError(f"expected exactly one type-3 bus, found {len(slack_buses)}")
    slack = int(slack_buses[0])

    injections = []
    for i in range(bus.shape[0]):
        pd = float(bus[i, 2])
        if pd != 0.0:
            injections.append(Injection(id=f"load_{node_ids[i]}", node=i, setpoint=-pd))
    gen = tables.get("gen", np.zeros((0, 0)))
    for g in range(gen.shape[0]):
        if gen[g, 7] <= 0:  # GEN_STATUS
            continue
        node = index_of_bus.get(int(gen[g, 0]))
        if node is None:
            raise ValidationError(f"generator at unknown bus {int(gen[g, 0])}")
        injections.append(
            Injection(id=f"gen{g}_{node_ids[node]}", node=node, setpoint=float(gen[g, 1]))
        )

    branches = []
    br = tables["branch"]
    for r in range(br.shape[0]):
        if br.shape[1] > 10 and br[r, 10] <= 0:  # BR_STATUS
            continue
        if br.shape[1] > 9 and br[r, 9] != 0.0:  # SHIFT angle
            raise UnsupportedFeature(f"branch row {r}: phase-shift angle not supported")
        x = float(br[r, 3])
        if x <= 0.0:
            raise ValidationError(f"branch row {r}: reactance {x} gives no finite susceptance")
        f = index_of_bus.get(int(br[r, 0]))
        t = index_of_bus.get(int(br[r, 1]))
        if f is None or t is None:
            raise ValidationError(f"branch row {r}: unknown endpoint bus")
        rate = float(br[r, 5]) if br.shape[1] > 5 else 0.0
        branches.append(
            Branch(
                id=f"br{r}_{node_ids[f]}_{node_ids[t]}",
                from_node=f,
                to_node=t,
                susceptance=1.0 / x,
                rating=rate if rate > 0.0 else UNLIMITED_RATING,
                monitored=True,
            )
        )

    return build_grid(node_ids, branches, injections, slack)


def load_matpower(path: str) -> Grid:
    with open(path, "r", encoding="utf-8") as fh:
        return grid_from_matpower(fh.read())
