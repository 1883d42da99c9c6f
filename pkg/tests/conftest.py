import numpy as np
import pytest

from crystalwalk import analyze, build_builtin, eigen_derivatives

NONSYM_HEX = dict(alpha=0.4, alpha_p=0.2, beta=0.2, beta_p=0.4, gamma=0.4, gamma_p=0.4)
NO_REVERSE_TRI = dict(alpha=1 / 3, alpha_p=0, beta=1 / 3, beta_p=0, gamma=1 / 3, gamma_p=0)


def triangular_graph(ah, bh, gh, kappa):
    """Triangular walk with hatted weights and common antisymmetric part κ."""
    return build_builtin("triangular", dict(
        alpha=(ah + kappa) / 2, alpha_p=(ah - kappa) / 2,
        beta=(bh + kappa) / 2, beta_p=(bh - kappa) / 2,
        gamma=(gh + kappa) / 2, gamma_p=(gh - kappa) / 2))


@pytest.fixture(scope="session")
def square():
    return analyze(build_builtin("square"))


@pytest.fixture(scope="session")
def square_unrefined():
    return analyze(build_builtin("square"), refine=False)


@pytest.fixture(scope="session")
def triangular():
    return analyze(build_builtin("triangular"))


@pytest.fixture(scope="session")
def hexagonal():
    return analyze(build_builtin("hexagonal"))


@pytest.fixture(scope="session")
def hexagonal_nonsym():
    return analyze(build_builtin("hexagonal", NONSYM_HEX))


@pytest.fixture(scope="session")
def pert_square(square):
    return eigen_derivatives(square)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
