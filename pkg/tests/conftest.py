import numpy as np
import pytest

from spinfermion.model import SpectralDensity, simplest_model


@pytest.fixture(scope="session")
def flat_exp():
    return SpectralDensity.flat_exp(1.0, 1.0)


@pytest.fixture(scope="session")
def two_level(flat_exp):
    """sigma_z system, sigma_x couplings, betas (1, 2), flat-exp densities."""
    return simplest_model([1.0, 2.0], flat_exp, lam=0.2)


@pytest.fixture(scope="session")
def equilibrium(flat_exp):
    return simplest_model([1.3, 1.3], flat_exp, lam=0.2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_LINES = pytest.StashKey[list]()


@pytest.fixture
def acceptance_log(request):
    """Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""
    return request.config.stash.setdefault(_LINES, [])


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
