import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rosseland.fields import ScalarField, TorusGrid
from rosseland.model import Model, constant_opacity, logistic_opacity, sine_velocity
from rosseland.noise import build_basis

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.function_scoped_fixture])
settings.load_profile("default")

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def grid():
    return TorusGrid(1, 64, 32)


@pytest.fixture
def small_grid():
    return TorusGrid(1, 32, 16)


@pytest.fixture
def model(grid):
    return Model(sine_velocity(grid), logistic_opacity())


@pytest.fixture
def const_model(grid):
    return Model(sine_velocity(grid), constant_opacity(1.0))


@pytest.fixture
def basis(grid):
    return build_basis(grid)


def sine_rho(grid, c0=1.0, c1=0.5):
    return ScalarField(grid, c0 + c1 * np.sin(2 * np.pi * grid.x_nodes[0]))
