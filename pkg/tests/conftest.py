import numpy as np
import pytest

from qefrate.freqdomain import model_grid, theta_star, theta_zero
from qefrate.model import example_model, random_pr_model

# filled by test_acceptance.py, printed at the end of the run
ACCEPTANCE_LINES = {}


@pytest.fixture(scope="session")
def model():
    return example_model()


@pytest.fixture(scope="session")
def grid(model):
    return model_grid(model)


@pytest.fixture(scope="session")
def tstar(model, grid):
    return theta_star(model, grid)


@pytest.fixture(scope="session")
def tzero(model, grid):
    return theta_zero(model, grid)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def small_model():
    return random_pr_model(2, 4, seed=3)


def random_hurwitz(rng, n, margin=0.5):
    A = rng.standard_normal((n, n))
    shift = np.max(np.linalg.eigvals(A).real) + margin
    return A - shift * np.eye(n)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
