"""Exact and Monte-Carlo evaluation of the infinite-horizon average LQR cost.

Random numbers come from numpy's counter-based Philox generator keyed by
``SeedSequence([seed, stream])``; stream ``i`` of a batch is bit-identical to
a single rollout run with ``stream=i``.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DivergenceError, StabilityError
from .matrix import as_mat, spectral_radius
from .riccati import RiccatiSolution, solve_dlyap
from .systems import CostParams, LinearSystem

BURN_IN = 1000
CHUNK = 1000
OVERFLOW = 1e150


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream)])))


@dataclass(frozen=True)
class GapReport:
    J_star: float
    J_hat: float
    gap: float
    sigma_K: np.ndarray
    method: str = "exact"
    direct_gap: Optional[float] = None


def _closed_loop(sys, K):
    K = as_mat(K, "K")
    L = sys.A + sys.B @ K
    rho = spectral_radius(L)
    if rho >= 1.0:
        raise StabilityError(f"gain does not stabilize the system, rho={rho:.6g}", rho)
    return K, L


def stationary_covariance(sys: LinearSystem, K, sigma_w: float) -> np.ndarray:
    """``Sigma(K)``, the stationary state covariance under ``u = K x``."""
    K, L = _closed_loop(sys, K)
    return solve_dlyap(L.T, sigma_w ** 2 * np.eye(sys.n))


def cost_of_gain(sys: LinearSystem, cost: CostParams, K, sigma_w: float,
                 check: bool = False) -> float:
    """Average cost ``J(A, B, K) = sigma_w^2 tr(P_K)`` of the static gain ``K``.

    ``P_K`` solves ``L' P L - P + Q + K'RK = 0`` with ``L = A + BK``. With
    ``check=True`` the covariance form ``tr((Q + K'RK) Sigma(K))`` is also
    evaluated and must agree to 1e-9 relative.
    """
    K, L = _closed_loop(sys, K)
    QK = cost.Q + K.T @ cost.R @ K
    J = sigma_w ** 2 * float(np.trace(solve_dlyap(L, QK)))
    if check:
        J2 = float(np.trace(QK @ solve_dlyap(L.T, sigma_w ** 2 * np.eye(sys.n))))
        if abs(J - J2) > 1e-9 * max(abs(J), 1e-300):
            raise AssertionError(f"cost evaluations disagree: {J!r} vs {J2!r}")
    return J


def optimal_cost(sol: RiccatiSolution, sigma_w: float) -> float:
    return sigma_w ** 2 * float(np.trace(sol.P))


def exact_gap(sys: LinearSystem, cost: CostParams, sol: RiccatiSolution, K,
              sigma_w: float) -> GapReport:
    """Suboptimality of ``K`` via ``tr(Sigma(K) dK' (R + B'PB) dK)``.

    The direct difference ``J(K) - J(K_star)`` is stored alongside as
    ``direct_gap`` for cross-checking.
    """
    K, _ = _closed_loop(sys, K)
    sigma_K = stationary_covariance(sys, K, sigma_w)
    dK = K - sol.K
    H = cost.R + sys.B.T @ sol.P @ sys.B
    gap = float(np.trace(sigma_K @ dK.T @ H @ dK))
    J_star = optimal_cost(sol, sigma_w)
    J_hat = cost_of_gain(sys, cost, K, sigma_w)
    return GapReport(J_star=J_star, J_hat=J_hat, gap=gap, sigma_K=sigma_K,
                     method="exact", direct_gap=J_hat - J_star)


@dataclass
class RolloutSummary:
    steps: int
    burn_in: int
    final_state_norm: float
    max_state_norm: float
    per_rollout: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _rollouts(sys, cost, K, sigma_w, horizon, seed, streams, burn_in, x0):
    K = as_mat(K, "K")
    n = sys.n
    rngs = [make_rng(seed, s) for s in streams]
    N = len(rngs)
    if x0 is None:
        X = np.column_stack([g.standard_normal(n) for g in rngs])
    else:
        X = np.repeat(as_mat(x0, "x0").reshape(n, 1), N, axis=1)
        for g in rngs:  # keep the stream aligned with the random-x0 case
            g.standard_normal(n)
    A, B, Q, R = sys.A, sys.B, cost.Q, cost.R
    total = burn_in + horizon
    acc = np.zeros(N)
    max_norm = 0.0
    # Overflow is detected per chunk and reported as DivergenceError.
    with np.errstate(over="ignore", invalid="ignore"):
        acc, X, max_norm = _rollout_loop(A, B, Q, R, K, X, rngs, n, sigma_w, burn_in, total, acc, max_norm)
    return acc / horizon, X, max_norm


def _rollout_loop(A, B, Q, R, K, X, rngs, n, sigma_w, burn_in, total, acc, max_norm):
    t = 0
    while t < total:
        m = min(CHUNK, total - t)
        noise = np.stack([g.standard_normal((m, n)) for g in rngs], axis=2)  # m, n, N
        noise *= sigma_w
        for j in range(m):
            U = K @ X
            if t >= burn_in:
                acc += np.einsum("ij,ij->j", X, Q @ X) + np.einsum("ij,ij->j", U, R @ U)
            X = A @ X + B @ U + noise[j]
            t += 1
        peak = float(np.max(np.abs(X)))
        max_norm = max(max_norm, peak)
        if not np.isfinite(peak) or peak > OVERFLOW:
            raise DivergenceError(f"state norm exceeded {OVERFLOW:g}", step=t)
    return acc, X, max_norm


def simulate_rollout(sys: LinearSystem, cost: CostParams, K, sigma_w: float, horizon: int,
                     seed: int, stream: int = 0, burn_in: int = BURN_IN, x0=None):
    """One closed-loop trajectory under ``u = K x``.

    ``x0 ~ N(0, I)`` unless ``x0`` is given; ``w_t ~ N(0, sigma_w^2 I)``. The
    first ``burn_in`` steps are simulated but not averaged.

    Returns:
        ``(avg_cost, RolloutSummary)``.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    avg, X, peak = _rollouts(sys, cost, K, sigma_w, horizon, seed, [stream], burn_in, x0)
    summary = RolloutSummary(steps=horizon, burn_in=burn_in,
                             final_state_norm=float(np.linalg.norm(X[:, 0])),
                             max_state_norm=peak, per_rollout=avg)
    return float(avg[0]), summary


def monte_carlo_cost(sys: LinearSystem, cost: CostParams, K, sigma_w: float, horizon: int,
                     n_rollouts: int, seed: int, burn_in: int = BURN_IN):
    """Mean and standard error of the average cost over independent rollouts."""
    avg, _, _ = _rollouts(sys, cost, K, sigma_w, horizon, seed, range(n_rollouts), burn_in, None)
    return float(avg.mean()), float(avg.std(ddof=1) / np.sqrt(n_rollouts)), avg
