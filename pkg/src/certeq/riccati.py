"""Discrete Lyapunov and algebraic Riccati solvers, LQR and Kalman gains.

Conventions used throughout the package:

* ``solve_dlyap(L, M)`` returns ``X`` with ``L' X L - X + M = 0``, i.e.
  ``X = sum_k (L')^k M L^k``. The stationary covariance of
  ``x_{t+1} = L x_t + w_t`` is therefore ``solve_dlyap(L.T, W)``.
* The LQR closed loop is ``A + B K`` with ``K = -(R + B'PB)^{-1} B'PA``.
* The Kalman (predictor) gain enters the observer with a plus sign,
  ``xhat_{t+1} = A xhat_t + B u_t + L (y_t - C xhat_t)``, so
  ``L = A S C' (C S C' + V)^{-1}`` and the estimation error evolves with the
  stable matrix ``A - L C``.

In the literature the symbol ``L`` is overloaded for the LQR closed loop and
for the Kalman gain; here they are ``RiccatiSolution.L`` (closed loop) and
the return value of :func:`kalman_gain`.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import (ConvergenceError, DetectabilityError, DimensionError,
                     SingularityError, StabilityError, StabilizabilityError)
from .matrix import as_mat, operator_norm, solve_linear, spectral_radius, symmetrize
from .systems import CostParams, LinearSystem, LQGSystem

DOUBLING_CAP = 200
VALUE_ITERATION_CAP = 200_000
DIVERGENCE_FACTOR = 1e12


@dataclass(frozen=True)
class RiccatiSolution:
    P: np.ndarray
    K: np.ndarray
    L: np.ndarray
    residual: float
    iterations: int
    method: str = "doubling"

    @property
    def closed_loop(self) -> np.ndarray:
        return self.L


def solve_dlyap(L, M, max_doublings=200) -> np.ndarray:
    """Solve ``L' X L - X + M = 0`` for a Schur-stable ``L`` by doubling.

    Args:
        L: square matrix with spectral radius below ``1 - 1e-9``.
        M: symmetric matrix of the same size.

    Returns:
        The symmetric solution ``X``; ``X`` is PSD whenever ``M`` is.
    """
    L = as_mat(L, "L")
    M = as_mat(M, "M")
    if L.shape[0] != L.shape[1] or M.shape != L.shape:
        raise DimensionError(f"incompatible shapes L{L.shape}, M{M.shape}")
    rho = spectral_radius(L)
    if rho >= 1.0 - 1e-9:
        raise StabilityError(f"dlyap requires a stable matrix, rho={rho:.6g}", rho)
    X = symmetrize(M)
    Lk = L.copy()
    scale = max(operator_norm(X), 1e-300)
    for it in range(1, max_doublings + 1):
        term = Lk.T @ X @ Lk
        X = symmetrize(X + term)
        Lk = Lk @ Lk
        if operator_norm(term) <= 1e-16 * max(operator_norm(X), scale) or not Lk.any():
            return X
    raise ConvergenceError("dlyap doubling did not converge", iterations=max_doublings)


def riccati_residual(P, sys: LinearSystem, cost: CostParams, form="gain") -> float:
    """Operator norm of ``F(P) = P - A'PA + A'PB (R + B'PB)^{-1} B'PA - Q``.

    ``form="inverse"`` evaluates the equivalent expression
    ``P - A'P (I + B R^{-1} B' P)^{-1} A - Q``.
    """
    P = as_mat(P, "P")
    A, B, Q, R = sys.A, sys.B, cost.Q, cost.R
    if form == "gain":
        G = R + B.T @ P @ B
        F = P - A.T @ P @ A + A.T @ P @ B @ solve_linear(G, B.T @ P @ A) - Q
    elif form == "inverse":
        S = B @ solve_linear(R, B.T)
        F = P - A.T @ P @ solve_linear(np.eye(sys.n) + S @ P, A) - Q
    else:
        raise ValueError(f"unknown residual form {form!r}")
    return operator_norm(F)


def lqr_gain(P, sys: LinearSystem, cost: CostParams) -> np.ndarray:
    A, B = sys.A, sys.B
    return -solve_linear(cost.R + B.T @ P @ B, B.T @ P @ A)


def _doubling(A, G, H):
    """Structure-preserving doubling for ``X = A' X (I + G X)^{-1} A + H``.

    Returns ``(status, X, iterations)``; status is one of ``"ok"``,
    ``"diverged"``, ``"singular"`` or ``"cap"``.
    """
    I = np.eye(A.shape[0])
    h_scale = max(operator_norm(H), 1e-300)
    for it in range(1, DOUBLING_CAP + 1):
        W = I + G @ H
        try:
            WiA = solve_linear(W, A)
            WiG = solve_linear(W, G)
        except SingularityError:
            return "singular", H, it
        H_new = symmetrize(H + A.T @ H @ WiA)
        G = symmetrize(G + A @ WiG @ A.T)
        A = A @ WiA
        if not np.all(np.isfinite(H_new)) or operator_norm(H_new) > DIVERGENCE_FACTOR * h_scale:
            return "diverged", H, it
        delta = operator_norm(H_new - H)
        H = H_new
        if delta <= 1e-14 * max(1.0, operator_norm(H)):
            return "ok", H, it
    return "cap", H, DOUBLING_CAP


def _value_iteration(sys, cost):
    A, B, Q, R = sys.A, sys.B, cost.Q, cost.R
    P = Q.copy()
    q_scale = max(operator_norm(Q), 1e-300)
    for it in range(1, VALUE_ITERATION_CAP + 1):
        G = R + B.T @ P @ B
        P_new = symmetrize(A.T @ P @ A - A.T @ P @ B @ solve_linear(G, B.T @ P @ A) + Q)
        if operator_norm(P_new) > DIVERGENCE_FACTOR * q_scale:
            return "diverged", P, it
        delta = operator_norm(P_new - P)
        P = P_new
        if delta <= 1e-14 * max(1.0, operator_norm(P)):
            return "ok", P, it
    return "cap", P, VALUE_ITERATION_CAP


def _finish(P, it, sys, cost, method):
    K = lqr_gain(P, sys, cost)
    L = sys.A + sys.B @ K
    residual = riccati_residual(P, sys, cost)
    return RiccatiSolution(P=P, K=K, L=L, residual=residual, iterations=it, method=method)


def _accept(sol):
    return (sol.residual <= 1e-10 * (1.0 + operator_norm(sol.P))
            and spectral_radius(sol.L) < 1.0)


def solve_dare(sys: LinearSystem, cost: CostParams) -> RiccatiSolution:
    """Stabilizing solution of the discrete algebraic Riccati equation.

    Structure-preserving doubling is tried first; plain value iteration from
    ``P0 = Q`` is the fallback. Stabilizability is not checked up front: a
    diverging iterate or an unstable closed loop at convergence raises
    :class:`StabilizabilityError`.
    """
    cost.check_against(sys)
    G = symmetrize(sys.B @ solve_linear(cost.R, sys.B.T))
    status, P, it = _doubling(sys.A.copy(), G, symmetrize(cost.Q))
    if status == "diverged":
        raise StabilizabilityError("Riccati iterate diverged; (A, B) is not stabilizable")
    if status in ("ok", "cap"):
        sol = _finish(P, it, sys, cost, "doubling")
        if _accept(sol):
            return sol

    status, P, it = _value_iteration(sys, cost)
    if status == "diverged":
        raise StabilizabilityError("Riccati iterate diverged; (A, B) is not stabilizable")
    sol = _finish(P, it, sys, cost, "value_iteration")
    rho = spectral_radius(sol.L)
    if rho >= 1.0:
        raise StabilizabilityError(
            f"closed loop at convergence has spectral radius {rho:.6g} >= 1")
    if sol.residual > 1e-10 * (1.0 + operator_norm(sol.P)):
        raise ConvergenceError(
            f"Riccati residual {sol.residual:.3e} above tolerance after {it} iterations",
            iterations=it, residual=sol.residual)
    return sol


def kalman_gain(sys: LQGSystem) -> Tuple[np.ndarray, np.ndarray]:
    """Steady-state one-step predictor gain and error covariance.

    Solves ``S = A S A' + W - A S C' (C S C' + V)^{-1} C S A'`` through the
    dual control problem ``(A', C', W, V)``.

    Returns:
        ``(Lkf, Sigma)`` with ``Lkf = A Sigma C' (C Sigma C' + V)^{-1}``;
        ``A - Lkf C`` is stable.
    """
    dual = LinearSystem(sys.A.T, sys.C.T)
    try:
        sol = solve_dare(dual, CostParams(sys.W, sys.V))
    except (StabilizabilityError, ConvergenceError) as exc:
        raise DetectabilityError(f"filter Riccati equation failed: {exc}") from exc
    Sigma = sol.P
    Lkf = -sol.K.T
    return Lkf, Sigma


def filter_residual(Sigma, sys: LQGSystem) -> float:
    A, C, W, V = sys.A, sys.C, sys.W, sys.V
    S = as_mat(Sigma)
    F = A @ S @ A.T + W - A @ S @ C.T @ solve_linear(C @ S @ C.T + V, C @ S @ A.T) - S
    return operator_norm(F)
