import numpy as np
import pytest
from hypothesis import settings

from hilbertlab.domains import Ellipsoid, PNormBall

settings.register_profile("lab", max_examples=40, deadline=None)
settings.load_profile("lab")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def disc():
    return Ellipsoid.unit_ball(2)


@pytest.fixture
def ball3():
    return Ellipsoid.unit_ball(3)


@pytest.fixture
def pball():
    return PNormBall(4.0, n=2)


def random_sl(rng, n, scale=0.3):
    """Projective map near the identity."""
    M = np.eye(n + 1) + scale * rng.standard_normal((n + 1, n + 1))
    return M / np.abs(np.linalg.det(M)) ** (1 / (n + 1))


def stretched_ellipsoid(rng, n=2):
    """Linear (affine chart) image of the unit ball."""
    L = np.eye(n) + 0.4 * rng.standard_normal((n, n))
    c = 0.3 * rng.standard_normal(n)
    A = np.eye(n + 1)
    A[1:, 1:] = L
    A[1:, 0] = c
    Ainv = np.linalg.inv(A)
    Q = Ainv.T @ np.diag([-1.0] + [1.0] * n) @ Ainv
    return Ellipsoid(Q), A


ACCEPTANCE_LINES = []


def record_criterion(k, ok, detail):
    """One pass/fail line per exit criterion, repeated in the terminal summary."""
    line = f"CRITERION {k}: {'PASS' if ok else 'FAIL'} {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
