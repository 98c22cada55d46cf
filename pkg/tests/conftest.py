"""Shared fixtures: builtin potentials and their extracted geometries.

Boundary extraction for the 2-d potential costs seconds (it classifies a
512^2 grid by gradient flow), so geometries are session-scoped and
shared across test modules.
"""

import pytest

from tempergap.basins import extract_boundary
from tempergap.potentials import builtin_potential


@pytest.fixture(scope="session")
def dw1_sym():
    return builtin_potential("DW1", {"delta": 0.0, "mu": 0.0})


@pytest.fixture(scope="session")
def dw1_asym():
    return builtin_potential("DW1", {"delta": 0.4, "mu": 0.0})


@pytest.fixture(scope="session")
def dw2():
    return builtin_potential("DW2", {"c_y": 6.0, "mu": 0.1})


@pytest.fixture(scope="session")
def dw2_sym():
    return builtin_potential("DW2", {"c_y": 6.0, "mu": 0.0})


@pytest.fixture(scope="session")
def geom_dw1_sym(dw1_sym):
    return extract_boundary(dw1_sym)


@pytest.fixture(scope="session")
def geom_dw1_asym(dw1_asym):
    return extract_boundary(dw1_asym)


@pytest.fixture(scope="session")
def geom_dw2(dw2):
    return extract_boundary(dw2)
