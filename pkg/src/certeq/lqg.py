"""Certainty-equivalent observer-controllers and their exact LQG cost.

The controller runs a one-step predictor,

    xhat_{t+1} = Ahat xhat_t + Bhat u_t + Lhat (y_t - Chat xhat_t),  u_t = Khat xhat_t,

so ``u_t`` depends on outputs up to ``y_{t-1}`` only. Stacking plant and
observer state gives the lifted closed loop ``z_{t+1} = M z_t + [w_t; Lhat v_t]``
whose stationary covariance yields the average cost exactly.
"""

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import block_diag

from .bounds import (LQG_CONSTANT, LQG_FAST_RATE_CONSTANT, BoundReport, SystemConstants,
                     _report, _slack, dare_bound_fixed_point)
from .errors import DimensionError, DivergenceError, DomainError, StabilityError
from .lqr_eval import CHUNK, OVERFLOW, make_rng
from .matrix import as_mat, min_singular_value, operator_norm, spectral_radius
from .riccati import kalman_gain, solve_dare, solve_dlyap
from .systems import CostParams, LinearSystem, LQGSystem
from .transient import tau

COND_S = (3.0 + math.sqrt(5.0)) / 2.0


@dataclass(frozen=True)
class ObserverController:
    Ahat: np.ndarray
    Bhat: np.ndarray
    Chat: np.ndarray
    Khat: np.ndarray
    Lhat: np.ndarray

    def check_against(self, plant: LQGSystem):
        n, d, p = plant.n, plant.d, plant.p
        expected = {"Ahat": (n, n), "Bhat": (n, d), "Chat": (p, n), "Khat": (d, n), "Lhat": (n, p)}
        for k, shape in expected.items():
            m = np.shape(getattr(self, k))
            if m != shape:
                raise DimensionError(f"{k} has shape {m}, expected {shape}")


@dataclass(frozen=True)
class LiftedClosedLoop:
    Mhat: np.ndarray
    Nhat: np.ndarray
    noise_map: np.ndarray
    S: np.ndarray

    @property
    def spectral_radius(self) -> float:
        return spectral_radius(self.Mhat)


@dataclass(frozen=True)
class LQGOptimum:
    K_star: np.ndarray
    Lkf_star: np.ndarray
    P_star: np.ndarray
    Sigma_star: np.ndarray
    J_star: float

    def __iter__(self):
        return iter((self.K_star, self.Lkf_star, self.P_star, self.Sigma_star, self.J_star))

    def controller(self, plant: LQGSystem) -> ObserverController:
        return ObserverController(plant.A, plant.B, plant.C, self.K_star, self.Lkf_star)


def psd_sqrt(m) -> np.ndarray:
    w, U = np.linalg.eigh(m)
    return (U * np.sqrt(np.clip(w, 0.0, None))) @ U.T


def similarity(n: int) -> np.ndarray:
    I = np.eye(n)
    return np.block([[I, np.zeros((n, n))], [I, I]])


def build_lifted(plant: LQGSystem, oc: ObserverController) -> LiftedClosedLoop:
    """Assemble ``M = [[A, B Khat], [Lhat C, Ahat + Bhat Khat - Lhat Chat]]`` and ``N = S^{-1} M S``."""
    oc.check_against(plant)
    A, B, C = plant.A, plant.B, plant.C
    Ah, Bh, Ch, Kh, Lh = (as_mat(getattr(oc, k), k) for k in ("Ahat", "Bhat", "Chat", "Khat", "Lhat"))
    M = np.block([[A, B @ Kh], [Lh @ C, Ah + Bh @ Kh - Lh @ Ch]])
    n = plant.n
    # S^{-1} = [[I, 0], [-I, I]] so N is formed without an inverse.
    MS = np.hstack([M[:, :n] + M[:, n:], M[:, n:]])
    N = np.vstack([MS[:n], MS[n:] - MS[:n]])
    noise_map = block_diag(np.eye(n), Lh)
    return LiftedClosedLoop(Mhat=M, Nhat=N, noise_map=noise_map, S=similarity(n))


def lqg_cost(plant: LQGSystem, oc: ObserverController) -> float:
    """Exact average cost ``E[y'Qy + u'Ru]`` of the interconnection.

    Raises:
        StabilityError: if the lifted closed loop is not Schur stable.
    """
    lifted = build_lifted(plant, oc)
    rho = lifted.spectral_radius
    if rho >= 1.0 - 1e-9:
        raise StabilityError(f"interconnection is unstable, rho(M)={rho:.6g}", rho)
    Lh = as_mat(oc.Lhat, "Lhat")
    Kh = as_mat(oc.Khat, "Khat")
    noise = block_diag(plant.W, Lh @ plant.V @ Lh.T)
    Sigma = solve_dlyap(lifted.Mhat.T, noise)
    weight = block_diag(plant.state_cost, Kh.T @ plant.R @ Kh)
    return float(np.sum(weight * Sigma) + np.sum(plant.Q * plant.V))


def lqg_optimal(plant: LQGSystem) -> LQGOptimum:
    """Optimal gains: LQR on ``(A, B, C'QC, R)`` and the steady-state predictor gain."""
    sol = solve_dare(plant.linear_system(), CostParams(plant.state_cost, plant.R))
    Lkf, Sigma = kalman_gain(plant)
    oc = ObserverController(plant.A, plant.B, plant.C, sol.K, Lkf)
    return LQGOptimum(K_star=sol.K, Lkf_star=Lkf, P_star=sol.P, Sigma_star=Sigma,
                      J_star=lqg_cost(plant, oc))


def certainty_equivalent_oc(estimates: Tuple, cost: Tuple) -> ObserverController:
    """Controller built from ``(Ahat, Bhat, Chat, Lhat)`` with ``Khat`` solved from the estimates."""
    Ah, Bh, Ch, Lh = (as_mat(m, k) for m, k in zip(estimates, ("Ahat", "Bhat", "Chat", "Lhat")))
    Q, R = (as_mat(m, k) for m, k in zip(cost, ("Q", "R")))
    sol = solve_dare(LinearSystem(Ah, Bh), CostParams(Ch.T @ Q @ Ch, R))
    return ObserverController(Ah, Bh, Ch, sol.K, Lh)


def lqg_constants(plant: LQGSystem, opt: LQGOptimum) -> SystemConstants:
    return SystemConstants.from_lqg(plant.A, plant.B, plant.C, plant.Q, plant.R,
                                    opt.P_star, opt.K_star, opt.Lkf_star)


def lqg_eps_bar(plant: LQGSystem, opt: LQGOptimum, consts: SystemConstants, eps: float,
                gamma: float) -> Tuple[float, BoundReport]:
    """``7 Gamma^3 / sigma_min(R) * f(3 ||C||_+ ||Q||_+ eps)`` with ``f`` the fixed-point Riccati bound.

    ``f`` is evaluated on the state-cost problem ``(A, B, C'QC, R)`` with the
    same perturbation size applied to the state cost.
    """
    sys = plant.linear_system()
    cost = CostParams(plant.state_cost, plant.R)
    sol = solve_dare(sys, cost)
    arg = 3.0 * (operator_norm(plant.C) + 1.0) * (operator_norm(plant.Q) + 1.0) * eps
    report = dare_bound_fixed_point(sys, cost, sol, arg, gamma=gamma, eps_q=arg)
    f = max(report.bound_value, arg)
    return 7.0 * consts.gamma_star ** 3 / min_singular_value(plant.R) * f, report


def lqg_gap_bound(plant: LQGSystem, consts: SystemConstants, eps_bar: float, gamma: float,
                  tau_N: float, constant: float = LQG_CONSTANT) -> BoundReport:
    """``C1 max{||W||, ||V||} (tr(C'QC) + tr R) tau_N^6 / (1 - gamma^2)^3 Gamma^6 eps_bar^2``.

    Applicable (stability certified) when
    ``eps_bar <= (1 - gamma) / (20 Gamma tau_N)`` and ``eps_bar <= 1``.
    """
    if not (0.0 <= gamma < 1.0):
        raise DomainError(f"gamma must lie in [0, 1), got {gamma}")
    if eps_bar < 0:
        raise DomainError("eps_bar must be nonnegative")
    G = consts.gamma_star
    noise = max(operator_norm(plant.W), operator_norm(plant.V))
    traces = float(np.trace(plant.state_cost) + np.trace(plant.R))
    value = (constant * noise * traces * tau_N ** 6 / (1.0 - gamma ** 2) ** 3
             * G ** 6 * eps_bar ** 2)
    slacks = {"stability": _slack(eps_bar, (1.0 - gamma) / (20.0 * G * tau_N)),
              "eps_bar_le_one": _slack(eps_bar, 1.0)}
    components = {"constant": constant, "noise_scale": noise, "cost_traces": traces,
                  "tau_N": tau_N, "gamma": gamma, "gamma_star": G, "eps_bar": eps_bar}
    return _report("lqg_gap", value, slacks, components)


def lqg_gap_bound_fast_rate(plant: LQGSystem, consts: SystemConstants, eps: float, gamma: float,
                            constant: float = LQG_FAST_RATE_CONSTANT,
                            opt: Optional[LQGOptimum] = None) -> BoundReport:
    """Gap bound in terms of the raw estimation error ``eps``.

    ``constant max{||W||, ||V||} (tr(C'QC) + tr R) ||Q||^2 / sigma_min(R)^2
    Gamma^26 tau_N^10 / (1 - gamma^2)^5 eps^2``, applicable when
    ``eps <= (1 - gamma^2)^2 / (tau_N^4 Gamma^11 ||Q||)``. The value of
    :func:`lqg_gap_bound` at the composed ``eps_bar`` is kept in
    ``components["composed"]``.
    """
    if eps < 0:
        raise DomainError("eps must be nonnegative")
    if opt is None:
        opt = lqg_optimal(plant)
    N = build_lifted(plant, opt.controller(plant)).Nhat
    if not (spectral_radius(N) <= gamma < 1.0):
        raise DomainError(f"gamma={gamma:.6g} must satisfy rho(N)={spectral_radius(N):.6g} <= gamma < 1")
    tN = tau(N, gamma, allow_boundary=True).tau
    G = consts.gamma_star
    norm_Q = operator_norm(plant.Q)
    noise = max(operator_norm(plant.W), operator_norm(plant.V))
    traces = float(np.trace(plant.state_cost) + np.trace(plant.R))
    value = (constant * noise * traces * norm_Q ** 2 / min_singular_value(plant.R) ** 2
             * G ** 26 * tN ** 10 / (1.0 - gamma ** 2) ** 5 * eps ** 2)
    limit = (1.0 - gamma ** 2) ** 2 / (tN ** 4 * G ** 11 * norm_Q) if norm_Q > 0 else math.inf
    eps_bar, f_report = lqg_eps_bar(plant, opt, consts, eps, gamma)
    composed = lqg_gap_bound(plant, consts, eps_bar, gamma, tN)
    components = {"constant": constant, "tau_N": tN, "gamma": gamma, "gamma_star": G,
                  "normQ": norm_Q, "eps_bar": eps_bar, "composed": composed.bound_value,
                  "composed_applicable": float(composed.applicable),
                  "riccati_bound_applicable": float(f_report.applicable)}
    return _report("lqg_gap_fast_rate", value, {"eps_proviso": _slack(eps, limit)}, components)


@np.errstate(over="ignore", invalid="ignore")  # overflow is checked per chunk
def lqg_monte_carlo(plant: LQGSystem, oc: ObserverController, horizon: int, n_rollouts: int,
                    seed: int, burn_in: int = 1000):
    """Mean and standard error of the average cost over independent closed-loop rollouts.

    Both plant and observer start at zero; ``u_t`` uses outputs through ``y_{t-1}``.
    """
    oc.check_against(plant)
    n, p = plant.n, plant.p
    rngs = [make_rng(seed, s) for s in range(n_rollouts)]
    Wh = psd_sqrt(plant.W)
    Vh = psd_sqrt(plant.V)
    A, B, C, Q, R = plant.A, plant.B, plant.C, plant.Q, plant.R
    Ah, Bh, Ch, Kh, Lh = (as_mat(getattr(oc, k)) for k in ("Ahat", "Bhat", "Chat", "Khat", "Lhat"))
    X = np.zeros((n, n_rollouts))
    Xh = np.zeros((n, n_rollouts))
    acc = np.zeros(n_rollouts)
    total = burn_in + horizon
    t = 0
    while t < total:
        m = min(CHUNK, total - t)
        draws = np.stack([g.standard_normal((m, n + p)) for g in rngs], axis=2)
        for j in range(m):
            Wt = Wh @ draws[j, :n]
            Vt = Vh @ draws[j, n:]
            U = Kh @ Xh
            Y = C @ X + Vt
            if t >= burn_in:
                acc += np.einsum("ij,ij->j", Y, Q @ Y) + np.einsum("ij,ij->j", U, R @ U)
            Xh = Ah @ Xh + Bh @ U + Lh @ (Y - Ch @ Xh)
            X = A @ X + B @ U + Wt
            t += 1
        peak = float(np.max(np.abs(X)))
        if not np.isfinite(peak) or peak > OVERFLOW:
            raise DivergenceError(f"state norm exceeded {OVERFLOW:g}", step=t)
    avg = acc / horizon
    return float(avg.mean()), float(avg.std(ddof=1) / np.sqrt(n_rollouts)), avg
