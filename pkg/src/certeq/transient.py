"""Transient amplification, H-infinity norms and controllability margins.

``tau(M, rho)`` is the smallest constant with ``||M^k|| <= tau * rho^k`` for
every ``k >= 0``. It is computed by walking the powers of ``M / rho`` until
the normalized norms have dropped three orders of magnitude below the running
maximum and ``k`` has more than doubled past the best index seen.
"""

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import DomainError, StabilityError
from .matrix import as_mat, min_singular_value, operator_norm, spectral_radius
from .systems import LinearSystem

TAU_CAP = 50_000
HINF_GRID = 4096
TAU_BLOCK = 256


@dataclass(frozen=True)
class TransientReport:
    rho: float
    tau: float
    argmax_k: int
    truncation_k: int
    hinf: Optional[float] = None


@dataclass(frozen=True)
class ControllabilityReport:
    ell: int
    C_ell: np.ndarray
    nu: float

    def is_ell_nu_controllable(self, threshold: float = 0.0) -> bool:
        return self.nu > threshold if threshold == 0.0 else self.nu >= threshold


def default_rho(A) -> float:
    """Strictly dominating radius used when only ``A`` is known."""
    return 1.001 * spectral_radius(A) + 1e-6


def default_gamma(L) -> float:
    """Midpoint between the closed-loop spectral radius and one."""
    return 0.5 * (1.0 + spectral_radius(L))


def tau(M, rho: float, allow_boundary: bool = False, cap: int = TAU_CAP) -> TransientReport:
    """Transient constant ``sup_k ||M^k|| rho^{-k}``.

    Args:
        M: square matrix.
        rho: comparison rate; must exceed the spectral radius of ``M``
            unless ``allow_boundary`` is set, in which case the cap decides.
        cap: hard limit on the number of powers examined.
    """
    M = as_mat(M, "M")
    if rho <= 0.0:
        raise DomainError(f"rho must be positive, got {rho}")
    r = spectral_radius(M)
    if rho <= r and not (allow_boundary and rho >= r * (1 - 1e-12)):
        raise DomainError(f"rho={rho:.6g} does not exceed spectral radius {r:.6g}")
    if rho >= operator_norm(M):
        return TransientReport(rho=rho, tau=1.0, argmax_k=0, truncation_k=0)
    step = M / rho
    power = np.eye(M.shape[0])
    best, best_k = 1.0, 0
    k = 0
    block = np.empty((TAU_BLOCK,) + M.shape)
    while k < cap:
        m = min(TAU_BLOCK, cap - k)
        for j in range(m):
            power = power @ step
            block[j] = power
        # Batched SVD; the scan below applies the same stopping rule step by step.
        vals = np.linalg.svd(block[:m], compute_uv=False)[:, 0]
        done = False
        for val in vals:
            k += 1
            if val > best:
                best, best_k = float(val), k
            elif val < 1e-3 * best and k > 2 * best_k:
                done = True
                break
        if done:
            break
    return TransientReport(rho=rho, tau=best, argmax_k=best_k, truncation_k=k)


def _resolvent_norm(L, theta):
    n = L.shape[0]
    z = np.exp(1j * np.atleast_1d(theta))
    stack = z[:, None, None] * np.eye(n)[None] - L[None].astype(complex)
    smin = np.linalg.svd(stack, compute_uv=False)[:, -1]
    return 1.0 / smin


def hinf_norm(L) -> float:
    """``sup_{|z|=1} ||(zI - L)^{-1}||`` for a Schur-stable ``L``.

    A uniform grid of 4096 angles locates the peak, which is then refined by
    golden-section search on the neighbouring grid cell pair.
    """
    L = as_mat(L, "L")
    r = spectral_radius(L)
    if r >= 1.0:
        raise StabilityError(f"H-infinity norm needs a stable matrix, rho={r:.6g}", r)
    grid = np.linspace(0.0, 2 * np.pi, HINF_GRID, endpoint=False)
    vals = _resolvent_norm(L, grid)
    i = int(np.argmax(vals))
    h = 2 * np.pi / HINF_GRID
    lo, hi = grid[i] - h, grid[i] + h
    f = lambda t: -float(_resolvent_norm(L, t)[0])  # noqa: E731
    g = (math.sqrt(5) - 1) / 2
    a, b = lo + (1 - g) * (hi - lo), lo + g * (hi - lo)
    fa, fb = f(a), f(b)
    while hi - lo > 1e-6:
        if fa < fb:
            hi, b, fb = b, a, fa
            a = lo + (1 - g) * (hi - lo)
            fa = f(a)
        else:
            lo, a, fa = a, b, fb
            b = lo + g * (hi - lo)
            fb = f(b)
    return max(float(vals[i]), -fa, -fb)


def controllability_matrix(A, B, ell: int) -> np.ndarray:
    A = as_mat(A, "A")
    block = as_mat(B, "B")
    blocks = [block]
    for _ in range(ell - 1):
        block = A @ block
        blocks.append(block)
    return np.hstack(blocks)


def controllability(sys: LinearSystem, ell: int) -> ControllabilityReport:
    """``ell``-step controllability matrix and its n-th singular value."""
    if ell < 1:
        raise DomainError(f"ell must be >= 1, got {ell}")
    C = controllability_matrix(sys.A, sys.B, ell)
    # With fewer columns than rows the n-th singular value is zero.
    nu = 0.0 if C.shape[1] < sys.n else min_singular_value(C)
    return ControllabilityReport(ell=ell, C_ell=C, nu=nu)


def power_perturb_bounds(M, rho: float, delta_norm: float, k: int,
                         tau_value: Optional[float] = None) -> Tuple[float, float]:
    """Bounds on ``||(M + D)^k||`` and ``||(M + D)^k - M^k||`` for ``||D|| <= delta``.

    Returns:
        ``(t (t d + rho)^k, k t^2 (t d + rho)^(k-1) d)`` with ``t = tau(M, rho)``.
    """
    if k < 1:
        raise DomainError(f"k must be >= 1, got {k}")
    t = tau(M, rho, allow_boundary=True).tau if tau_value is None else tau_value
    base = t * delta_norm + rho
    return t * base ** k, k * t * t * base ** (k - 1) * delta_norm


def controllability_perturb_bound(report: ControllabilityReport, tauA: float, rho: float,
                                  eps: float, normB: float) -> float:
    """Lower bound on the n-th singular value of a perturbed controllability matrix.

    A value of at least ``report.nu / 2`` certifies that every system within
    ``eps`` (in both ``A`` and ``B``) is ``(ell, nu/2)``-controllable.
    """
    ell = report.ell
    beta = max(1.0, tauA * eps + rho)
    return report.nu - 3.0 * eps * ell ** 1.5 * tauA ** 2 * beta ** (ell - 1) * (normB + 1.0)
