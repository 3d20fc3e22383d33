import numpy as np
import pytest

import vmfbs

# filled by test_acceptance.record(); echoed after the test summary so the
# per-criterion verdict lines survive output capture
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20160114)


def lasso_1d():
    """f = 0.5 (x-3)^2, g = |x|; minimizer 2, F* = 2.5."""
    f = vmfbs.PNormResidual(np.array([[1.0]]), np.array([3.0]))
    return vmfbs.CompositeProblem(f=f, g=vmfbs.L1Norm(1.0), dimension=1)


def steep_quadratic_1d():
    """f = 2 x^2 (L = 4), pure smooth; the stepsize-floor workhorse."""
    f = vmfbs.PNormResidual(np.array([[2.0]]), np.array([0.0]))
    return vmfbs.CompositeProblem(f=f, g=vmfbs.ZeroTerm(), dimension=1)


def random_lasso(rng, m=12, n=8, weight=0.1):
    a = rng.standard_normal((m, n))
    b = rng.standard_normal(m)
    f = vmfbs.PNormResidual(a, b)
    return vmfbs.CompositeProblem(f=f, g=vmfbs.L1Norm(weight), dimension=n)


def random_kl(rng, m=6, n=4):
    a = np.abs(rng.standard_normal((m, n))) + 0.1
    x_true = np.abs(rng.standard_normal(n)) + 0.5
    b = a @ x_true
    f = vmfbs.KLDivergence(a, b)
    g = vmfbs.BoxIndicator(0.0, np.inf)
    return vmfbs.CompositeProblem(f=f, g=g, dimension=n, domain_regime="general")
