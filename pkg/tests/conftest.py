import os

import pytest

from batchdc import load_grid, prepare_base_ptdf

DATA = os.path.join(os.path.dirname(__file__), "data")


def data_path(name: str) -> str:
    return os.path.join(DATA, name)


@pytest.fixture(scope="session")
def grid_a():
    return load_grid(data_path("fixture_a.json"))


@pytest.fixture(scope="session")
def grid_b():
    return load_grid(data_path("fixture_b.json"))


@pytest.fixture(scope="session")
def grid_300():
    return load_grid(data_path("case300.json"))


@pytest.fixture(scope="session")
def base_a(grid_a):
    return prepare_base_ptdf(grid_a)


@pytest.fixture(scope="session")
def base_b(grid_b):
    return prepare_base_ptdf(grid_b)


@pytest.fixture(scope="session")
def base_300(grid_300):
    return prepare_base_ptdf(grid_300)
