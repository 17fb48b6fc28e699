import numpy as np
import pytest

from relids import fields, hamiltonian as ham
from relids.grid import make_grid


@pytest.fixture(scope="session")
def free_big():
    g = make_grid(2, 16.0, 32)
    return ham.assemble_h(fields.FieldSpec.zero(2), fields.PotentialSpec.zero(), g)


@pytest.fixture(scope="session")
def small_grid():
    return make_grid(2, 8.0, 8)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
