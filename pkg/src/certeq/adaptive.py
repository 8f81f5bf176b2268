"""Epsilon-greedy adaptive LQR with certainty-equivalent redesign.

Each run plays ``u_t = K_i x_t + eta_t`` with
``eta_t ~ N(0, scale * sigma_w^2 * t^(-exponent) I)``. At the end of epoch
``i`` (length ``epoch_base * 2^i``) the model is re-fit by ridge least squares
on all data so far and a new gain is synthesized from the estimate. The new
gain is only adopted when a data-driven certificate says it stabilizes every
model within the estimated error radius (a small-gain test); otherwise the previous gain stays.

Several seeds are simulated together as a batch; every seed owns an
independent random stream, so its trace does not depend on the batch.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import (CerteqError, DivergenceError, DomainError, FitError, SingularityError,
                     StabilityError)
from .lqr_eval import OVERFLOW, make_rng, optimal_cost
from .matrix import as_mat, operator_norm, spectral_radius
from .riccati import solve_dare
from .systems import CostParams, LinearSystem
from .transient import hinf_norm

REGRET_FLOOR = 1e-9
CHUNK = 2000
ERROR_RADIUS_FACTOR = 1.0


@dataclass(frozen=True)
class AdaptiveConfig:
    horizon: int
    epoch_base: int = 200
    exploration_exponent: float = 0.5
    exploration_scale: float = 1.0
    ridge_lambda: float = 1e-6
    seed: int = 0
    K0: Optional[np.ndarray] = None
    sigma_w: float = 1.0
    x0: Optional[np.ndarray] = None

    def __post_init__(self):
        if not (0.0 < self.exploration_exponent < 1.0):
            raise DomainError("exploration_exponent must lie in (0, 1)")
        if self.horizon < 1 or self.epoch_base < 1:
            raise DomainError("horizon and epoch_base must be positive")
        if self.exploration_scale < 0 or self.ridge_lambda < 0 or self.sigma_w < 0:
            raise DomainError("exploration_scale, ridge_lambda and sigma_w must be nonnegative")

    def epoch_starts(self) -> List[int]:
        """Zero-based step indices at which each epoch begins."""
        starts, t, length = [], 0, self.epoch_base
        while t < self.horizon:
            starts.append(t)
            t += length
            length *= 2
        return starts


@dataclass
class RegretTrace:
    seed: int
    J_star: float
    cum_cost: np.ndarray
    regret: np.ndarray
    epoch_starts: List[int]
    param_errors: List[float] = field(default_factory=list)
    gains: List[np.ndarray] = field(default_factory=list)
    executed_rho: List[float] = field(default_factory=list)
    rejected: int = 0
    failed: bool = False
    failure_step: Optional[int] = None
    slope_fit: Optional[Tuple[float, float, float]] = None


def least_squares_id(states, inputs, ridge_lambda: float):
    """Ridge estimate of ``(A, B)`` from a trajectory.

    Args:
        states: ``(N + 1, n)`` array of consecutive states.
        inputs: ``(N, d)`` array of the inputs applied between them.
        ridge_lambda: Tikhonov weight on ``||[A, B]||_F^2``.

    Returns:
        ``(Ahat, Bhat, cov_min_eig)`` where the last value is the smallest
        eigenvalue of the regressor Gram matrix (without the ridge term).
    """
    X = as_mat(states, "states")
    U = as_mat(inputs, "inputs")
    if X.shape[0] != U.shape[0] + 1:
        raise DomainError(f"need one more state than inputs, got {X.shape[0]} and {U.shape[0]}")
    Z = np.hstack([X[:-1], U])
    gram = Z.T @ Z
    cross = Z.T @ X[1:]
    return _ridge(gram, cross, ridge_lambda, X.shape[1])


def _ridge(gram, cross, lam, n):
    if gram.shape[0] > 0 and lam == 0.0 and np.linalg.matrix_rank(gram) < gram.shape[0]:
        raise SingularityError("regressor Gram matrix is rank deficient and ridge_lambda is 0")
    theta = np.linalg.solve(gram + lam * np.eye(gram.shape[0]), cross)
    min_eig = float(np.linalg.eigvalsh(gram)[0])
    return theta[:n].T, theta[n:].T, min_eig


def fit_regret_slope(trace, window: float = 0.5) -> Tuple[float, float, float]:
    """OLS fit of ``log max(regret, 1e-9)`` on ``log t`` over the trailing window.

    ``trace`` is a :class:`RegretTrace` or a plain regret sequence indexed
    by ``t = 1..T``.
    """
    if not (0.0 < window <= 1.0):
        raise DomainError("window must lie in (0, 1]")
    regret = np.asarray(trace.regret if isinstance(trace, RegretTrace) else trace, dtype=float)
    T = regret.size
    start = min(int(np.floor((1.0 - window) * T)), T - 2)
    t = np.arange(start + 1, T + 1, dtype=float)
    r = regret[start:]
    if not np.any(r > 0):
        raise FitError("regret is nonpositive throughout the fit window")
    x = np.log(t)
    y = np.log(np.maximum(r, REGRET_FLOOR))
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def _certify(Ahat, Bhat, K, min_eig, sigma_w, n, d):
    """Small-gain test: accept ``K`` if it stabilizes every model within the error radius.

    With ``r = sigma_w sqrt((n + d) / lambda_min(Gram))`` the true closed loop
    is ``Ahat + Bhat K + D`` with ``||D|| <= r (1 + ||K||)``; it is stable
    whenever ``||D|| * hinf(Ahat + Bhat K) < 1``.
    """
    L = Ahat + Bhat @ K
    try:
        if min_eig <= 0 or spectral_radius(L) >= 1.0:
            return False
        radius = ERROR_RADIUS_FACTOR * max(sigma_w, 1e-12) * np.sqrt((n + d) / min_eig)
        return radius * (1.0 + operator_norm(K)) * hinf_norm(L) < 1.0
    except CerteqError:
        return False


def _rowwise(M, X):
    """``M_s x_s`` per row; elementwise so each row's rounding ignores batch size."""
    return (M * X[:, None, :]).sum(axis=-1)


def run_adaptive(sys: LinearSystem, cost: CostParams, config: AdaptiveConfig) -> RegretTrace:
    """Single-seed run; see :func:`run_adaptive_batch`."""
    return run_adaptive_batch(sys, cost, config, [config.seed])[0]


@np.errstate(over="ignore", invalid="ignore")  # overflow is checked per chunk
def run_adaptive_batch(sys: LinearSystem, cost: CostParams, config: AdaptiveConfig,
                       seeds: Sequence[int]) -> List[RegretTrace]:
    """Run the adaptive controller once per seed.

    A run whose state exceeds the overflow threshold is stopped and marked
    ``failed`` with ``failure_step`` set; its remaining regret entries are NaN.

    Raises:
        StabilityError: if ``K0`` does not stabilize the true system.
    """
    if config.K0 is None:
        raise DomainError("a stabilizing initial gain K0 is required")
    K0 = as_mat(config.K0, "K0")
    rho0 = spectral_radius(sys.A + sys.B @ K0)
    if rho0 >= 1.0:
        raise StabilityError(f"K0 does not stabilize the system, rho={rho0:.6g}", rho0)
    n, d, T = sys.n, sys.d, config.horizon
    sol = solve_dare(sys, cost)
    J_star = optimal_cost(sol, config.sigma_w)
    S = len(seeds)
    rngs = [make_rng(s, 0) for s in seeds]
    A, B, Q, R = sys.A, sys.B, cost.Q, cost.R
    theta_true = np.hstack([A, B])

    K = np.repeat(K0[None], S, axis=0)
    X = np.zeros((S, n)) if config.x0 is None else np.repeat(as_mat(config.x0).reshape(1, n), S, 0)
    gram = np.zeros((S, n + d, n + d))
    cross = np.zeros((S, n + d, n))
    stage = np.zeros((S, T))
    alive = np.ones(S, dtype=bool)
    traces = [RegretTrace(seed=int(s), J_star=J_star, cum_cost=np.empty(0), regret=np.empty(0),
                          epoch_starts=config.epoch_starts()) for s in seeds]
    for tr in traces:
        tr.gains.append(K0.copy())
        tr.executed_rho.append(rho0)

    starts = config.epoch_starts() + [T]
    sig2 = config.exploration_scale * config.sigma_w ** 2
    for e in range(len(starts) - 1):
        t0, t1 = starts[e], starts[e + 1]
        m = t1 - t0
        Z = np.empty((S, m, n + d))
        Xn = np.empty((S, m, n))
        steps = np.arange(t0 + 1, t1 + 1, dtype=float)
        eta_sd = np.sqrt(sig2 * steps ** (-config.exploration_exponent))
        for c0 in range(0, m, CHUNK):
            c1 = min(m, c0 + CHUNK)
            draws = np.stack([g.standard_normal((c1 - c0, n + d)) for g in rngs], axis=1)
            W = config.sigma_w * draws[:, :, :n]
            H = eta_sd[c0:c1, None, None] * draws[:, :, n:]
            for j in range(c1 - c0):
                U = _rowwise(K, X) + H[j]
                stage[:, t0 + c0 + j] = (_rowwise(Q, X) * X).sum(-1) + (_rowwise(R, U) * U).sum(-1)
                Z[:, c0 + j, :n] = X
                Z[:, c0 + j, n:] = U
                X = _rowwise(A, X) + _rowwise(B, U) + W[j]
                Xn[:, c0 + j] = X
            bad = ~np.isfinite(X).all(axis=1) | (np.abs(X).max(axis=1) > OVERFLOW)
            for s in np.flatnonzero(bad & alive):
                traces[s].failed = True
                traces[s].failure_step = t0 + c1
                alive[s] = False
            X[~alive] = 0.0
        if t1 >= T:
            break
        for s in range(S):
            gram[s] += Z[s].T @ Z[s]
            cross[s] += Z[s].T @ Xn[s]
        for s in range(S):
            tr = traces[s]
            if not alive[s]:
                continue
            Ah, Bh, min_eig = _ridge(gram[s], cross[s], config.ridge_lambda, n)
            tr.param_errors.append(operator_norm(np.hstack([Ah, Bh]) - theta_true))
            try:
                cand = solve_dare(LinearSystem(Ah, Bh), cost).K
                accept = _certify(Ah, Bh, cand, min_eig, config.sigma_w, n, d)
            except CerteqError:
                accept = False
            if accept:
                K[s] = cand
            else:
                tr.rejected += 1
            tr.gains.append(K[s].copy())
            tr.executed_rho.append(spectral_radius(A + B @ K[s]))

    t_axis = np.arange(1, T + 1, dtype=float)
    for s, tr in enumerate(traces):
        cum = np.cumsum(stage[s])
        regret = cum - t_axis * J_star
        if tr.failed:
            cum[tr.failure_step - 1:] = np.nan
            regret[tr.failure_step - 1:] = np.nan
        tr.cum_cost, tr.regret = cum, regret
        if not tr.failed:
            try:
                tr.slope_fit = fit_regret_slope(tr, 0.5)
            except FitError:
                tr.slope_fit = None
    return traces


def pooled_regret(traces: Sequence[RegretTrace]) -> np.ndarray:
    """Pointwise mean regret over the runs that did not fail."""
    ok = [tr.regret for tr in traces if not tr.failed]
    if not ok:
        raise FitError("every run failed")
    return np.mean(ok, axis=0)


def failure_error(trace: RegretTrace) -> DivergenceError:
    return DivergenceError(f"run with seed {trace.seed} diverged", step=trace.failure_step)
