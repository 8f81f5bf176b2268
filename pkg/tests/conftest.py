import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from certeq.lqr_eval import make_rng
from certeq.systems import CostParams, LinearSystem

settings.register_profile("certeq", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("certeq")

# Filled by tests/test_acceptance.py, printed after the run.
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


def random_lqr(rng, n, d, radius=0.9, q_floor=1.0):
    A = rng.standard_normal((n, n))
    A *= radius / max(np.max(np.abs(np.linalg.eigvals(A))), 1e-12)
    B = rng.standard_normal((n, d))
    G = rng.standard_normal((n, n))
    H = rng.standard_normal((d, d))
    Q = q_floor * np.eye(n) + 0.3 * G @ G.T
    R = np.eye(d) + 0.3 * H @ H.T
    return LinearSystem(A, B), CostParams(Q, R)


def unit_direction(rng, shape, norm):
    G = rng.standard_normal(shape)
    return G * (norm / np.linalg.norm(G, 2))


@pytest.fixture
def rng():
    return make_rng(1234, 0)
