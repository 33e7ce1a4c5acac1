from pathlib import Path

import pytest

from batchdc import load_grid, prepare_base_ptdf

DATA = Path(__file__).resolve().parents[2] / "tests" / "data"


def data_path(name: str) -> str:
    return str(DATA / name)


@pytest.fixture(scope="session")
def grid_b():
    return load_grid(data_path("fixture_b.json"))


@pytest.fixture(scope="session")
def base_b(grid_b):
    return prepare_base_ptdf(grid_b)
