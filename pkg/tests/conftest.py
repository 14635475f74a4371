import numpy as np
import pytest

from phasemargins.constructions import husimi_operator, prop1_operator
from phasemargins.hilbert import HermiteState, MixedState, default_grid


def random_state(rng: np.random.Generator, dim: int = 6, max_rank: int = 6) -> MixedState:
    """Density matrix of rank <= max_rank on span{h_0..h_(dim-1)}."""
    r = int(rng.integers(1, max_rank + 1))
    vecs = rng.normal(size=(r, dim)) + 1j * rng.normal(size=(r, dim))
    weights = rng.dirichlet(np.ones(r))
    return MixedState(weights, [HermiteState(v) for v in vecs])


def state_suite(seed: int = 20240601, n: int = 20, dim: int = 6):
    rng = np.random.default_rng(seed)
    return [random_state(rng, dim) for _ in range(n)]


@pytest.fixture(scope="session")
def grid():
    return default_grid()


@pytest.fixture(scope="session")
def husimi():
    return husimi_operator()


@pytest.fixture(scope="session")
def prop1():
    return prop1_operator()


_ACCEPTANCE: dict = {}


@pytest.fixture(scope="session")
def acceptance_log():
    """Criterion number -> (passed, description), printed in the terminal summary."""
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        ok, desc = _ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {desc}")
