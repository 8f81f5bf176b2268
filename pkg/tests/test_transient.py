import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from certeq.errors import DomainError, StabilityError
from certeq.matrix import operator_norm, spectral_radius
from certeq.systems import LinearSystem
from certeq.transient import (controllability, controllability_perturb_bound, hinf_norm,
                              power_perturb_bounds, tau, _resolvent_norm)


def brute_tau(M, rho, kmax=200):
    P, best = np.eye(M.shape[0]), 1.0
    for k in range(1, kmax + 1):
        P = P @ M
        best = max(best, operator_norm(P) / rho ** k)
    return best


def test_tau_examples():
    r = tau(np.array([[0.5]]), 0.5, allow_boundary=True)
    assert r.tau == 1.0 and r.argmax_k == 0
    assert tau(np.diag([0.3, 0.8]), 0.9).tau == 1.0
    J = np.array([[0.5, 1.0], [0.0, 0.5]])
    assert tau(J, 0.9).tau == pytest.approx(brute_tau(J, 0.9), rel=1e-12)


def test_tau_domain():
    with pytest.raises(DomainError):
        tau(np.array([[0.5, 1.0], [0.0, 0.5]]), 0.4)


@given(st.integers(0, 10_000))
def test_tau_monotone_and_dominates(seed):
    g = np.random.default_rng(seed)
    M = g.standard_normal((3, 3))
    M *= 0.8 / spectral_radius(M)
    r1, r2 = 0.85, 0.95
    t1, t2 = tau(M, r1), tau(M, r2)
    assert t1.tau >= t2.tau - 1e-9
    P = np.eye(3)
    for k in range(1, 3 * t1.truncation_k + 1):
        P = P @ M
        assert operator_norm(P) <= t1.tau * r1 ** k * (1 + 1e-9)


def test_hinf_examples():
    assert hinf_norm(np.zeros((2, 2))) == pytest.approx(1.0)
    assert hinf_norm(np.array([[0.5]])) == pytest.approx(2.0, rel=1e-9)
    with pytest.raises(StabilityError):
        hinf_norm(np.array([[1.5]]))


def test_hinf_fine_grid(rng):
    for _ in range(3):
        L = rng.standard_normal((3, 3))
        L *= 0.9 / spectral_radius(L)
        fine = np.max(_resolvent_norm(L, np.linspace(0, 2 * np.pi, 2 ** 16, endpoint=False)))
        h = hinf_norm(L)
        assert h == pytest.approx(fine, rel=1e-4)
        g = 0.5 * (1 + spectral_radius(L))
        assert h <= tau(L, g).tau / (1 - g) + 1e-6


def test_controllability_examples():
    assert controllability(LinearSystem(np.random.default_rng(0).standard_normal((3, 3)), np.eye(3)), 1).nu == pytest.approx(1.0)
    beta = 0.1
    assert controllability(LinearSystem(1.01 * np.eye(2), np.diag([1.0, beta])), 1).nu == pytest.approx(beta)
    rep = controllability(LinearSystem([[0.0, 1.0], [0.0, 0.0]], [[0.0], [1.0]]), 2)
    assert np.allclose(rep.C_ell, [[0.0, 1.0], [1.0, 0.0]])
    assert rep.nu == pytest.approx(1.0)
    assert rep.is_ell_nu_controllable()
    assert controllability(LinearSystem(np.eye(3), np.ones((3, 1))), 2).nu == 0.0


def test_power_bounds_examples():
    M = np.array([[0.5]])
    p, d = power_perturb_bounds(M, 0.5, 0.0, 4)
    assert p == pytest.approx(0.5 ** 4) and d == 0.0
    p, d = power_perturb_bounds(M, 0.5, 0.1, 3)
    assert p == pytest.approx(0.216) and d == pytest.approx(0.108)


def test_controllability_perturb_examples():
    rep = controllability(LinearSystem(0.5 * np.eye(2), np.eye(2)), 1)
    assert controllability_perturb_bound(rep, 1.0, 0.9, 0.0, 1.0) == rep.nu
    assert controllability_perturb_bound(rep, 1.0, 1.0, 0.01, 1.0) == pytest.approx(rep.nu - 0.06)
