"""End-to-end acceptance checks; each records a PASS/FAIL line shown after the run."""

import subprocess
import sys
import time

import numpy as np
import pytest

from certeq.bounds import (SystemConstants, dare_bound_direct, dare_bound_fixed_point, gain_perturb_bound,
                           gap_bound_meta)
from certeq.errors import CerteqError
from certeq.experiments import (beta_fits, beta_sweep, default_gap_system, default_lqg_plant, gap_sweep,
                                log_grid, lqg_sweep, regret_experiment, regret_system, sweep_fit)
from certeq.lqg import (ObserverController, build_lifted, certainty_equivalent_oc, lqg_constants, lqg_cost,
                        lqg_gap_bound, lqg_optimal)
from certeq.lqr_eval import exact_gap, make_rng, monte_carlo_cost
from certeq.matrix import min_singular_value, operator_norm, spectral_radius
from certeq.riccati import riccati_residual, solve_dare
from certeq.systems import CostParams, LinearSystem, LQGSystem
from certeq.transient import (controllability, controllability_matrix, controllability_perturb_bound, default_gamma,
                              default_rho,
                              power_perturb_bounds, tau)

from conftest import ACCEPTANCE_LINES, random_lqr, unit_direction

pytestmark = pytest.mark.slow


def record(k, ok, detail):
    ACCEPTANCE_LINES[k] = f"CRITERION {k}: {'PASS' if ok else 'FAIL'} {detail}"
    assert ok, detail


def scalar_p(a, b, q, r):
    # b^2 p^2 + (r - q b^2 - a^2 r) p - q r = 0, positive root
    lin = r - q * b * b - a * a * r
    if b == 0:
        return q * r / lin
    return (-lin + np.sqrt(lin * lin + 4 * b * b * q * r)) / (2 * b * b)


def test_criterion_1_dare():
    rng = make_rng(101, 0)
    start = time.perf_counter()
    worst, unstable = 0.0, 0
    for _ in range(100):
        n, d = int(rng.integers(1, 9)), int(rng.integers(1, 5))
        sys_, cost = random_lqr(rng, n, d, radius=float(rng.uniform(0.5, 1.5)))
        sol = solve_dare(sys_, cost)
        worst = max(worst, riccati_residual(sol.P, sys_, cost) / (1 + operator_norm(sol.P)))
        unstable += spectral_radius(sol.L) >= 1
    scalar_err = 0.0
    for a, b, q, r in [(0.5, 1, 1, 1), (1.01, 1, 1, 1), (2.0, 0.5, 3, 0.2), (0.9, 0.1, 1, 1), (1.5, 2, 0.1, 5)]:
        sol = solve_dare(LinearSystem([[a]], [[b]]), CostParams([[q]], [[r]]))
        exact = scalar_p(a, b, q, r)
        scalar_err = max(scalar_err, abs(sol.P[0, 0] - exact) / max(1, exact))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-10 and unstable == 0 and scalar_err <= 1e-10 and elapsed < 10
    record(1, ok, f"max scaled residual {worst:.2e}, unstable {unstable}, scalar err {scalar_err:.2e}, "
                  f"{elapsed:.1f}s")


def test_criterion_2_eps_squared():
    start = time.perf_counter()
    sys_, cost = default_gap_system()
    points = gap_sweep(sys_, cost, log_grid(1e-4, 10 ** -1.5, 8), 20, seed=0)
    slope, _, r2 = sweep_fit(points)
    elapsed = time.perf_counter() - start
    ok = abs(slope - 2.0) <= 0.1 and r2 >= 0.99 and elapsed < 60
    record(2, ok, f"slope {slope:.4f}, R2 {r2:.5f}, {elapsed:.1f}s")


def test_criterion_3_beta_separation():
    fits = beta_fits(beta_sweep([0.1, 0.05, 0.025, 0.0125], 1e-13))
    s93, sd, sr = fits["bound93"][0], fits["boundDirect"][0], fits["ratio"][0]
    ok = abs(s93 - 4) <= 0.3 and abs(sd - 3) <= 0.3 and abs(sr - 1) <= 0.3
    record(3, ok, f"slopes bound93 {s93:.3f} (4), boundDirect {sd:.3f} (3), ratio {sr:.3f} (1)")


def _perturbed(sys_, eps, rng):
    return LinearSystem(sys_.A + unit_direction(rng, sys_.A.shape, eps),
                        sys_.B + unit_direction(rng, sys_.B.shape, eps))


def _lqg_instance(rng):
    n = int(rng.integers(2, 4))
    A = rng.standard_normal((n, n))
    A *= rng.uniform(0.3, 0.8) / spectral_radius(A)
    C = np.eye(n) + 0.2 * rng.standard_normal((n, n))
    return LQGSystem.isotropic(A, rng.standard_normal((n, 2)), C, np.eye(n), np.eye(2), 1.0, 0.5)


def test_criterion_4_bound_validity():
    rng = make_rng(404, 0)
    counts = dict.fromkeys(["fixed_point", "direct", "gain", "meta", "lqg"], 0)
    violations = dict.fromkeys(counts, 0)

    def check(name, actual, bound):
        counts[name] += 1
        violations[name] += actual > bound * (1 + 1e-9)

    tries = 0
    while min(counts[k] for k in ("fixed_point", "direct", "gain", "meta")) < 200 and tries < 5000:
        tries += 1
        sys_, cost = random_lqr(rng, int(rng.integers(2, 5)), int(rng.integers(1, 3)))
        sol = solve_dare(sys_, cost)
        small = 10 ** rng.uniform(-11, -8)
        hat = _perturbed(sys_, small, rng)
        try:
            dP = operator_norm(solve_dare(hat, cost).P - sol.P)
        except CerteqError:
            continue
        fp = dare_bound_fixed_point(sys_, cost, sol, small)
        if fp.applicable:
            check("fixed_point", dP, fp.bound_value)
        dr = dare_bound_direct(sys_, cost, sol, small)
        if dr.applicable:
            check("direct", dP, dr.bound_value)

        eps = 10 ** rng.uniform(-9, -2)
        hat = _perturbed(sys_, eps, rng)
        try:
            sol_h = solve_dare(hat, cost)
        except CerteqError:
            continue
        consts = SystemConstants.from_lqr(sys_, cost, sol)
        f = max(eps, operator_norm(sol_h.P - sol.P))
        if f < 1:
            check("gain", operator_norm(sol_h.K - sol.K), gain_perturb_bound(consts, f, min_singular_value(cost.R)))
        g = default_gamma(sol.L)
        meta = gap_bound_meta(consts, f, g, tau(sol.L, g).tau, sys_.d, 1.0)
        if meta.applicable and spectral_radius(sys_.A + sys_.B @ sol_h.K) < 1:
            check("meta", exact_gap(sys_, cost, sol, sol_h.K, 1.0).gap, meta.bound_value)

    tries = 0
    while counts["lqg"] < 200 and tries < 3000:
        tries += 1
        plant = _lqg_instance(rng)
        opt = lqg_optimal(plant)
        consts = lqg_constants(plant, opt)
        N = build_lifted(plant, opt.controller(plant)).Nhat
        g = default_gamma(N)
        tN = tau(N, g).tau
        eps = 10 ** rng.uniform(-6, -3.5)
        est = (plant.A + unit_direction(rng, plant.A.shape, eps), plant.B + unit_direction(rng, plant.B.shape, eps),
               plant.C + unit_direction(rng, plant.C.shape, eps),
               opt.Lkf_star + unit_direction(rng, opt.Lkf_star.shape, eps))
        try:
            oc = certainty_equivalent_oc(est, (plant.Q, plant.R))
        except CerteqError:
            continue
        eps_bar = max(eps, operator_norm(oc.Khat - opt.K_star))
        rep = lqg_gap_bound(plant, consts, eps_bar, g, tN)
        if rep.applicable:
            check("lqg", lqg_cost(plant, oc) - opt.J_star, rep.bound_value)

    ok = all(c >= 200 for c in counts.values()) and not any(violations.values())
    record(4, ok, "applicable/violations " + ", ".join(f"{k} {counts[k]}/{violations[k]}" for k in counts))


def test_criterion_5_lemmas():
    rng = make_rng(505, 0)
    v_pow = 0
    for _ in range(500):
        n = int(rng.integers(1, 6))
        M = rng.standard_normal((n, n))
        M *= rng.uniform(0.2, 1.3) / max(spectral_radius(M), 1e-12)
        rho = default_rho(M) * rng.uniform(1.0, 1.2)
        delta = 10 ** rng.uniform(-4, -0.5)
        D = unit_direction(rng, (n, n), delta)
        k = int(rng.integers(1, 40))
        pb, db = power_perturb_bounds(M, rho, delta, k)
        Mk, Pk = np.linalg.matrix_power(M, k), np.linalg.matrix_power(M + D, k)
        v_pow += operator_norm(Pk) > pb * (1 + 1e-9) or operator_norm(Pk - Mk) > db * (1 + 1e-9) + 1e-13
    v_psd = 0
    for _ in range(200):
        n = int(rng.integers(1, 7))
        G, H = rng.standard_normal((n, n)), rng.standard_normal((n, int(rng.integers(1, n + 1))))
        Mp, Np = G @ G.T * rng.uniform(0, 10), H @ H.T * rng.uniform(0, 10)
        lhs = operator_norm(Np @ np.linalg.inv(np.eye(n) + Mp @ Np))
        v_psd += lhs > operator_norm(Np) + 1e-10
    v_ctrl, checked = 0, 0
    while checked < 200:
        n, d = int(rng.integers(2, 5)), int(rng.integers(1, 3))
        sys_, _ = random_lqr(rng, n, d, radius=float(rng.uniform(0.5, 1.2)))
        ell = n
        rep = controllability(sys_, ell)
        if rep.nu <= 1e-8:
            continue
        checked += 1
        rho = default_rho(sys_.A)
        tA = tau(sys_.A, rho).tau
        eps = 10 ** rng.uniform(-6, -2)
        lower = controllability_perturb_bound(rep, tA, rho, eps, operator_norm(sys_.B))
        hat = _perturbed(sys_, eps, rng)
        sv = np.linalg.svd(controllability_matrix(hat.A, hat.B, ell), compute_uv=False)[n - 1]
        v_ctrl += sv < lower - 1e-12
    ok = v_pow == v_psd == v_ctrl == 0
    record(5, ok, f"violations matrix_powers {v_pow}/500, psd_norm {v_psd}/200, controllable_perturb {v_ctrl}/200")


def test_criterion_6_exact_gap():
    rng = make_rng(606, 0)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(500):
        sys_, cost = random_lqr(rng, int(rng.integers(1, 6)), int(rng.integers(1, 4)))
        sol = solve_dare(sys_, cost)
        K = sol.K + unit_direction(rng, sol.K.shape, 10 ** rng.uniform(-2, -1))
        if spectral_radius(sys_.A + sys_.B @ K) >= 1:
            continue
        rep = exact_gap(sys_, cost, sol, K, 1.0)
        worst = max(worst, abs(rep.gap - rep.direct_gap) / rep.gap)
    zs = []
    for i in range(10):
        sys_, cost = random_lqr(rng, 3, 2, radius=0.8)
        sol = solve_dare(sys_, cost)
        K = sol.K + unit_direction(rng, sol.K.shape, 0.3)
        rep = exact_gap(sys_, cost, sol, K, 1.0)
        mean, se, _ = monte_carlo_cost(sys_, cost, K, 1.0, 20000, 200, seed=6000 + i)
        zs.append(abs(mean - rep.J_star - rep.gap) / se)
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-8 and max(zs) <= 3 and elapsed < 300
    record(6, ok, f"max relative trace/direct diff {worst:.2e}, max MC z {max(zs):.2f}, {elapsed:.1f}s")


def test_criterion_7_lqg():
    rng = make_rng(707, 0)
    worst = 0.0
    for _ in range(100):
        plant = _lqg_instance(rng)
        n, d, p = plant.n, plant.d, plant.p
        oc = ObserverController(*(rng.standard_normal(s) for s in ((n, n), (n, d), (p, n), (d, n), (n, p))))
        lifted = build_lifted(plant, oc)
        ref = np.linalg.inv(lifted.S) @ lifted.Mhat @ lifted.S
        worst = max(worst, np.max(np.abs(lifted.Nhat - ref)) / max(1.0, operator_norm(lifted.Mhat)))
    worse = 0
    for _ in range(100):
        plant = _lqg_instance(rng)
        opt = lqg_optimal(plant)
        eps = 10 ** rng.uniform(-3, -1)
        est = (plant.A + unit_direction(rng, plant.A.shape, eps), plant.B + unit_direction(rng, plant.B.shape, eps),
               plant.C + unit_direction(rng, plant.C.shape, eps),
               opt.Lkf_star + unit_direction(rng, opt.Lkf_star.shape, eps))
        try:
            J = lqg_cost(plant, certainty_equivalent_oc(est, (plant.Q, plant.R)))
        except CerteqError:
            continue
        worse += lqg_cost(plant, opt.controller(plant)) > J
    slope, _, r2 = sweep_fit(lqg_sweep(default_lqg_plant(), log_grid(1e-4, 10 ** -1.5, 8), 20, seed=0))
    ok = worst <= 1e-10 and worse == 0 and abs(slope - 2) <= 0.15
    record(7, ok, f"max similarity error {worst:.2e}, truth beaten {worse}/100, LQG slope {slope:.4f} (R2 {r2:.4f})")


def test_criterion_8_regret():
    start = time.perf_counter()
    sys_, cost, K0 = regret_system()
    half = regret_experiment(sys_, cost, K0, 100_000, range(100), 0.5)
    third = regret_experiment(sys_, cost, K0, 100_000, range(100), 1 / 3)
    elapsed = time.perf_counter() - start
    s_half, s_third = half.pooled_fit[0], third.pooled_fit[0]
    ok = (abs(s_half - 0.5) <= 0.15 and abs(s_third - 2 / 3) <= 0.15
          and half.median_final < third.median_final and elapsed < 600)
    record(8, ok, f"slope 1/2 {s_half:.3f}, slope 1/3 {s_third:.3f}, median final regret "
                  f"{half.median_final:.1f} < {third.median_final:.1f}, failures {half.failures + third.failures}, "
                  f"{elapsed:.1f}s")


def test_criterion_9_cli_determinism(tmp_path):
    commands = [["gap-sweep"], ["beta-sweep"], ["lqg-sweep", "--seeds", "5"],
                ["regret", "--T", "20000", "--seeds", "5", "--exponent", "0.5,0.3333333333333333"]]
    same = []
    for argv in commands:
        outs = []
        for rep in range(2):
            path = tmp_path / f"{argv[0]}-{rep}.csv"
            subprocess.run([sys.executable, "-m", "certeq.cli", *argv, "--output", str(path)], check=True)
            outs.append(path.read_bytes())
        same.append(outs[0] == outs[1] and len(outs[0]) > 0)
    record(9, all(same), "byte-identical " + ", ".join(f"{c[0]} {s}" for c, s in zip(commands, same)))
