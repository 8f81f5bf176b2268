import numpy as np
import pytest
from scipy.stats import ortho_group

from certeq.bounds import LQG_CONSTANT
from certeq.errors import DimensionError, StabilityError
from certeq.lqg import (COND_S, ObserverController, build_lifted, certainty_equivalent_oc, lqg_constants,
                        lqg_cost, lqg_eps_bar, lqg_gap_bound, lqg_gap_bound_fast_rate, lqg_monte_carlo,
                        lqg_optimal)
from certeq.matrix import operator_norm, spectral_radius
from certeq.riccati import solve_dare
from certeq.systems import CostParams, LinearSystem, LQGSystem
from certeq.transient import tau

from conftest import unit_direction


def random_plant(rng, n=3, d=2, p=2, radius=0.9, sigma_v=0.5):
    A = rng.standard_normal((n, n))
    A *= radius / spectral_radius(A)
    return LQGSystem.isotropic(A, rng.standard_normal((n, d)), rng.standard_normal((p, n)),
                               np.eye(p), np.eye(d), 1.0, sigma_v)


def perturbed_oc(plant, opt, eps, rng):
    est = (plant.A + unit_direction(rng, plant.A.shape, eps), plant.B + unit_direction(rng, plant.B.shape, eps),
           plant.C + unit_direction(rng, plant.C.shape, eps),
           opt.Lkf_star + unit_direction(rng, opt.Lkf_star.shape, eps))
    return certainty_equivalent_oc(est, (plant.Q, plant.R))


def test_delayed_information_limit(rng):
    plant0 = random_plant(rng)
    plant = LQGSystem.isotropic(plant0.A, plant0.B, np.eye(3), np.eye(3), np.eye(2), 1.0, 1e-4)
    sol = solve_dare(plant.linear_system(), CostParams(np.eye(3), np.eye(2)))
    H = np.eye(2) + plant.B.T @ sol.P @ plant.B
    # u_t only sees y up to t-1, so the last process-noise sample is never observed.
    limit = np.trace(sol.P) + np.trace(sol.K.T @ H @ sol.K) + 3e-8
    assert lqg_optimal(plant).J_star == pytest.approx(limit, rel=1e-3)


def test_decoupled_scalar():
    sw, sv, q = 0.7, 0.4, 2.0
    plant = LQGSystem.isotropic([[0.0]], [[1.0]], [[1.0]], [[q]], [[1.0]], sw, sv)
    K, Lkf, P, Sigma, J = lqg_optimal(plant)
    assert K[0, 0] == 0.0 and Lkf[0, 0] == pytest.approx(0.0)
    assert Sigma[0, 0] == pytest.approx(sw ** 2)
    assert J == pytest.approx(q * (sw ** 2 + sv ** 2), rel=1e-12)


def test_unitary_invariance(rng):
    plant = random_plant(rng)
    T = ortho_group.rvs(3, random_state=5)
    J1, J2 = lqg_optimal(plant).J_star, lqg_optimal(plant.transformed(T)).J_star
    assert J2 == pytest.approx(J1, rel=1e-8)
    opt = lqg_optimal(plant)
    oc = certainty_equivalent_oc((T @ plant.A @ T.T, T @ plant.B, plant.C @ T.T, T @ opt.Lkf_star),
                                 (plant.Q, plant.R))
    assert lqg_cost(plant, oc) == pytest.approx(J1, rel=1e-8)


def test_lifted_truth_structure(rng):
    plant = random_plant(rng)
    opt = lqg_optimal(plant)
    lifted = build_lifted(plant, opt.controller(plant))
    n = plant.n
    N = lifted.Nhat
    assert np.allclose(N[n:, :n], 0.0, atol=1e-14)
    assert np.allclose(N[:n, :n], plant.A + plant.B @ opt.K_star)
    assert np.allclose(N[n:, n:], plant.A - opt.Lkf_star @ plant.C)
    assert spectral_radius(N[:n, :n]) < 1 and spectral_radius(N[n:, n:]) < 1


def test_lifted_zero_plant():
    Z = np.zeros((2, 2))
    plant = LQGSystem(Z, Z, np.eye(2), np.eye(2), np.eye(2), np.eye(2), np.eye(2))
    Ah = np.diag([0.5, 0.2])
    oc = ObserverController(Ah, Z, np.eye(2), np.eye(2), 0.1 * np.eye(2))
    lifted = build_lifted(plant, oc)
    assert lifted.spectral_radius == pytest.approx(spectral_radius(Ah + Z - 0.1 * np.eye(2)))


def test_similarity_identity(rng):
    for _ in range(20):
        plant = random_plant(rng)
        oc = ObserverController(*(rng.standard_normal(s) for s in ((3, 3), (3, 2), (2, 3), (2, 3), (3, 2))))
        lifted = build_lifted(plant, oc)
        ref = np.linalg.inv(lifted.S) @ lifted.Mhat @ lifted.S
        assert np.max(np.abs(lifted.Nhat - ref)) <= 1e-12 * max(1.0, operator_norm(lifted.Mhat))
        assert spectral_radius(lifted.Nhat) == pytest.approx(spectral_radius(lifted.Mhat), abs=1e-8)


def test_condition_number_power_bound(rng):
    plant = random_plant(rng)
    opt = lqg_optimal(plant)
    lifted = build_lifted(plant, opt.controller(plant))
    assert np.linalg.cond(lifted.S) == pytest.approx(COND_S)
    Mk, Nk = np.eye(6), np.eye(6)
    for _ in range(50):
        Mk, Nk = Mk @ lifted.Mhat, Nk @ lifted.Nhat
        assert operator_norm(Nk) <= COND_S * operator_norm(Mk) * (1 + 1e-9) + 1e-300
        assert operator_norm(Mk) <= COND_S * operator_norm(Nk) * (1 + 1e-9) + 1e-300


def test_cost_truth_and_noise_only(rng):
    plant = random_plant(rng)
    opt = lqg_optimal(plant)
    assert lqg_cost(plant, opt.controller(plant)) == pytest.approx(opt.J_star, rel=1e-9)
    quiet = LQGSystem(plant.A, plant.B, plant.C, np.zeros((3, 3)), plant.V, plant.Q, plant.R)
    oc = ObserverController(plant.A, plant.B, plant.C, opt.K_star, np.zeros((3, 2)))
    assert lqg_cost(quiet, oc) == pytest.approx(np.trace(plant.Q @ plant.V), rel=1e-14)


def test_cost_unstable_and_dimensions(rng):
    plant = LQGSystem.isotropic([[1.5]], [[1.0]], [[1.0]], [[1.0]], [[1.0]])
    with pytest.raises(StabilityError) as exc:
        lqg_cost(plant, ObserverController([[0.0]], [[0.0]], [[0.0]], [[0.0]], [[0.0]]))
    assert exc.value.spectral_radius >= 1.5 - 1e-12
    with pytest.raises(DimensionError):
        build_lifted(plant, ObserverController(np.eye(2), [[0.0]], [[0.0]], [[0.0]], [[0.0]]))


def test_ce_controller_truth(rng):
    plant = random_plant(rng)
    opt = lqg_optimal(plant)
    oc = certainty_equivalent_oc((plant.A, plant.B, plant.C, opt.Lkf_star), (plant.Q, plant.R))
    assert np.allclose(oc.Khat, opt.K_star, rtol=1e-9, atol=1e-12)


def test_cost_matches_monte_carlo(rng):
    plant = random_plant(rng)
    opt = lqg_optimal(plant)
    oc = perturbed_oc(plant, opt, 0.05, rng)
    mean, se, _ = lqg_monte_carlo(plant, oc, 5000, 60, seed=4)
    assert abs(mean - lqg_cost(plant, oc)) <= 3 * se


def test_gap_bound_examples(rng):
    plant = random_plant(rng)
    opt = lqg_optimal(plant)
    c = lqg_constants(plant, opt)
    zero = lqg_gap_bound(plant, c, 0.0, 0.9, 2.0)
    assert zero.bound_value == 0.0 and zero.applicable
    rep = lqg_gap_bound(plant, c, 1e-3, 0.9, 2.0)
    traces = np.trace(plant.state_cost) + np.trace(plant.R)
    expected = LQG_CONSTANT * 1.0 * traces * 2.0 ** 6 / (1 - 0.81) ** 3 * c.gamma_star ** 6 * 1e-6
    assert rep.bound_value == pytest.approx(expected, rel=1e-12)
    assert rep.applicable == (1e-3 <= 0.1 / (20 * c.gamma_star * 2.0))


def test_fast_rate_composition(rng):
    plant = random_plant(rng)
    opt = lqg_optimal(plant)
    c = lqg_constants(plant, opt)
    N = build_lifted(plant, opt.controller(plant)).Nhat
    g = 0.5 * (1 + spectral_radius(N))
    assert lqg_gap_bound_fast_rate(plant, c, 0.0, g, opt=opt).bound_value == 0.0
    rep = lqg_gap_bound_fast_rate(plant, c, 1e-6, g, opt=opt)
    eps_bar, _ = lqg_eps_bar(plant, opt, c, 1e-6, g)
    composed = lqg_gap_bound(plant, c, eps_bar, g, tau(N, g).tau).bound_value
    assert rep.components["composed"] == pytest.approx(composed, rel=1e-12)
