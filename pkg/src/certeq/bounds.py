"""Explicit Riccati-perturbation and suboptimality bounds.

Notation: ``||X||_+ = ||X|| + 1``; ``Gamma = 1 + max`` of the spectral norms
of the instance's defining matrices; ``S = B R^{-1} B'``. Every calculator
returns a :class:`BoundReport` whose ``components`` dict records each factor
that entered the number, so a reported bound can be re-derived by hand.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from .errors import ControllabilityError, DomainError
from .matrix import min_singular_value, operator_norm, spectral_radius
from .riccati import RiccatiSolution
from .systems import CostParams, LinearSystem
from .transient import (controllability, controllability_perturb_bound, default_gamma,
                        default_rho, tau)

META_CONSTANT = 200.0
DIRECT_CONSTANT = 32.0
FAST_RATE_CONSTANT = META_CONSTANT * DIRECT_CONSTANT ** 2  # 204800
LQG_CONSTANT = 1136.0 * 64.0  # 72704
# eps_bar = 7 Gamma^3 * nu(3 ||C||_+ ||Q||_+ eps), nu carrying the factor 6.
LQG_FAST_RATE_CONSTANT = LQG_CONSTANT * (7.0 * 6.0 * 3.0) ** 2


@dataclass(frozen=True)
class SystemConstants:
    gamma_star: float
    S_norm: float
    plus_norms: Dict[str, float]
    norms: Dict[str, float]

    @classmethod
    def from_lqr(cls, sys: LinearSystem, cost: CostParams, sol: RiccatiSolution):
        norms = {
            "A": operator_norm(sys.A),
            "B": operator_norm(sys.B),
            "P": operator_norm(sol.P),
            "K": operator_norm(sol.K),
            "L": operator_norm(sol.L),
            "R_inv": operator_norm(np.linalg.inv(cost.R)),
            "Q": operator_norm(cost.Q),
            "R": operator_norm(cost.R),
        }
        gamma_star = 1.0 + max(norms[k] for k in ("A", "B", "P", "K"))
        return cls._build(sys.B, cost.R, norms, gamma_star)

    @classmethod
    def from_lqg(cls, A, B, C, Q, R, P, K, Lkf):
        """Constants of a partially observed instance (``Lkf`` is the Kalman gain)."""
        norms = {
            "A": operator_norm(A), "B": operator_norm(B), "C": operator_norm(C),
            "P": operator_norm(P), "K": operator_norm(K), "Lkf": operator_norm(Lkf),
            "L": operator_norm(A + B @ K), "R_inv": operator_norm(np.linalg.inv(R)),
            "Q": operator_norm(Q), "R": operator_norm(R),
        }
        gamma_star = 1.0 + max(norms[k] for k in ("A", "B", "C", "P", "K", "Lkf"))
        return cls._build(B, R, norms, gamma_star)

    @classmethod
    def _build(cls, B, R, norms, gamma_star):
        S_norm = operator_norm(B @ np.linalg.solve(R, B.T))
        plus = {k: v + 1.0 for k, v in norms.items()}
        return cls(gamma_star=gamma_star, S_norm=S_norm, plus_norms=plus, norms=norms)


@dataclass
class BoundReport:
    name: str
    bound_value: float
    applicable: bool
    applicability_margin: float
    components: Dict[str, float] = field(default_factory=dict)
    slacks: Dict[str, float] = field(default_factory=dict)


def _report(name, value, slacks, components):
    """Assemble a report; each slack is ``(limit - value) / limit`` style, >= 0 when met."""
    margin = min(slacks.values()) if slacks else math.inf
    return BoundReport(name=name, bound_value=float(value), applicable=bool(margin >= 0.0),
                       applicability_margin=float(margin), components=dict(components),
                       slacks=dict(slacks))


def _slack(value, limit):
    if limit == math.inf:
        return math.inf
    if limit <= 0.0:
        return -math.inf if value > 0.0 else 0.0
    return (limit - value) / limit


def _check_gamma(gamma, rho_min, what):
    if not (rho_min <= gamma < 1.0):
        raise DomainError(f"gamma={gamma:.6g} must satisfy {what}={rho_min:.6g} <= gamma < 1")


def dare_bound_fixed_point(sys: LinearSystem, cost: CostParams, sol: RiccatiSolution,
                           eps: float, gamma: Optional[float] = None,
                           eps_q: float = 0.0) -> BoundReport:
    """Operator-theoretic bound on ``||P_hat - P_star||``.

    Evaluates ``nu = 6 eps tau(L, g)^2 / (1 - g^2) ||A||_+^2 ||P||_+^2 ||B||_+ ||R^-1||_+``
    and flags it applicable when the contraction conditions hold:
    ``nu <= min{(1 - g^2) / (128 tau^2 ||L||^2 ||S||), 1/||S||, 1/2}``, plus the
    side conditions ``eps <= min{1, ||B||}`` and the perturbation part of the
    Lipschitz constant staying below 1/4.

    When ``sigma_min(P) < 1`` the cost is rescaled by ``1/sigma_min(P)`` (the
    optimal gain is unchanged), the bound is computed for the scaled problem
    and mapped back; ``components["rescale"]`` records the factor.

    Args:
        eps: bound on ``||A_hat - A||`` and ``||B_hat - B||``.
        gamma: rate with ``rho(L_star) <= gamma < 1``; defaults to the midpoint.
        eps_q: bound on ``||Q_hat - Q||`` (zero for pure LQR).
    """
    if eps < 0:
        raise DomainError("eps must be nonnegative")
    L = sol.L
    if gamma is None:
        gamma = default_gamma(L)
    _check_gamma(gamma, spectral_radius(L), "rho(L)")

    p_min = float(np.linalg.eigvalsh(sol.P)[0])
    alpha = 1.0 / p_min if p_min < 1.0 else 1.0
    norm_A = operator_norm(sys.A)
    norm_B = operator_norm(sys.B)
    norm_P = alpha * operator_norm(sol.P)
    norm_Rinv = operator_norm(np.linalg.inv(cost.R)) / alpha
    norm_L = operator_norm(L)
    S_norm = operator_norm(sys.B @ np.linalg.solve(cost.R, sys.B.T)) / alpha
    eps_eff = max(eps, alpha * eps_q)

    t = tau(L, gamma, allow_boundary=True).tau
    decay = t * t / (1.0 - gamma * gamma)
    nu = 6.0 * eps_eff * decay * (norm_A + 1) ** 2 * (norm_P + 1) ** 2 * (norm_B + 1) * (norm_Rinv + 1)
    lipschitz_eps = (32.0 * decay * eps_eff * (norm_A + 1) ** 2 * (norm_P + 1) ** 3
                     * (norm_B + 1) ** 3 * (norm_Rinv + 1) ** 2)
    contraction_limit = ((1.0 - gamma ** 2) / (128.0 * t * t * norm_L ** 2 * S_norm)
                         if norm_L * S_norm > 0 else math.inf)
    slacks = {
        "nu_contraction": _slack(nu, contraction_limit),
        "nu_inv_S": _slack(nu, 1.0 / S_norm if S_norm > 0 else math.inf),
        "nu_half": _slack(nu, 0.5),
        "eps_le_one": _slack(eps_eff, 1.0),
        "eps_le_normB": _slack(eps_eff, norm_B),
        "lipschitz_eps": _slack(lipschitz_eps, 0.25),
    }
    components = {"tau_L": t, "gamma": gamma, "rescale": alpha, "eps_effective": eps_eff,
                  "nu_scaled": nu, "normA_plus": norm_A + 1, "normP_plus": norm_P + 1,
                  "normB_plus": norm_B + 1, "normRinv_plus": norm_Rinv + 1,
                  "normL": norm_L, "S_norm": S_norm}
    return _report("dare_fixed_point", nu / alpha, slacks, components)


def default_ell(sys: LinearSystem) -> int:
    """Smallest horizon whose controllability matrix has full row rank."""
    for ell in range(1, sys.n + 1):
        if controllability(sys, ell).nu > 1e-12:
            return ell
    return sys.n


def dare_bound_direct(sys: LinearSystem, cost: CostParams, sol: RiccatiSolution, eps: float,
                      rho: Optional[float] = None, ell: Optional[int] = None) -> BoundReport:
    """Controllability-based bound on ``||P_hat - P_star||``.

    ``32 eps ell^{5/2} tau(A, rho)^3 beta^{2(ell-1)} (1 + 1/nu) (1 + ||B||)^2 ||P||
    max{||Q||, ||R||} / min{sigma_min(R), sigma_min(Q)}`` with
    ``beta = max{1, eps tau(A, rho) + rho}``; applicable when the value is at
    most one and the cost assumptions hold (``Q`` PD, ``sigma_min(R) >= 1``,
    ``||P|| >= 1``).

    Raises:
        ControllabilityError: if the ``ell``-step controllability matrix is rank deficient.
    """
    if eps < 0:
        raise DomainError("eps must be nonnegative")
    if rho is None:
        rho = default_rho(sys.A)
    if rho < spectral_radius(sys.A) * (1 - 1e-12):
        raise DomainError(f"rho={rho:.6g} is below the spectral radius of A")
    if ell is None:
        ell = default_ell(sys)
    report = controllability(sys, ell)
    nu = report.nu
    if nu <= 0.0:
        raise ControllabilityError(f"system is not ({ell}, nu)-controllable for any nu > 0")
    tA = tau(sys.A, rho, allow_boundary=True).tau
    beta = max(1.0, eps * tA + rho)
    norm_B = operator_norm(sys.B)
    norm_P = operator_norm(sol.P)
    sq = min_singular_value(cost.Q)
    sr = min_singular_value(cost.R)
    cond = max(operator_norm(cost.Q), operator_norm(cost.R)) / min(sr, sq) if min(sr, sq) > 0 else math.inf
    value = (DIRECT_CONSTANT * eps * ell ** 2.5 * tA ** 3 * beta ** (2 * (ell - 1))
             * (1.0 + 1.0 / nu) * (1.0 + norm_B) ** 2 * norm_P * cond)
    if eps == 0.0:
        value = 0.0
    slacks = {
        "bound_le_one": _slack(value, 1.0),
        "q_positive_definite": 0.0 if sq > 1e-10 else -math.inf,
        "sigma_min_R_ge_one": _slack(1.0, sr) if sr < 1.0 else 0.0,
        "normP_ge_one": _slack(1.0, norm_P) if norm_P < 1.0 else 0.0,
    }
    components = {"tau_A": tA, "rho": rho, "ell": ell, "nu": nu, "beta": beta,
                  "condition_number": cond, "normB": norm_B, "normP": norm_P,
                  "controllability_margin": controllability_perturb_bound(
                      report, tA, rho, eps, norm_B) - nu / 2.0}
    return _report("dare_direct", value, slacks, components)


def gain_perturb_bound(consts: SystemConstants, f_eps: float, sigma_min_R: float) -> float:
    """``7 f Gamma^3 / sigma_min(R)``: gain mismatch when ``A, B, P`` move by at most ``f``."""
    if not (0.0 <= f_eps < 1.0):
        raise DomainError(f"gain perturbation bound needs 0 <= f < 1, got {f_eps}")
    if sigma_min_R <= 0.0:
        raise DomainError("sigma_min(R) must be positive")
    return 7.0 * f_eps * consts.gamma_star ** 3 / sigma_min_R


def perturbed_stability_certificate(L, delta_norm: float, gamma: float,
                                    tau_L: Optional[float] = None) -> Tuple[bool, float]:
    """Certify ``L + D`` for every ``||D|| <= delta_norm``.

    If ``tau(L, gamma) * delta_norm <= (1 - gamma) / 2`` then
    ``||(L + D)^k|| <= tau(L, gamma) ((1 + gamma) / 2)^k`` for all ``k``.
    """
    _check_gamma(gamma, spectral_radius(L), "rho(L)")
    t = tau(L, gamma, allow_boundary=True).tau if tau_L is None else tau_L
    if t * delta_norm <= 0.5 * (1.0 - gamma):
        return True, t
    return False, math.inf


def stability_margin_check(sol: RiccatiSolution, k_gap: float, gamma: float,
                           consts: SystemConstants) -> Tuple[bool, float]:
    """Certify that a gain near ``K_star`` still stabilizes the true system.

    Certified when ``7 Gamma^3 k_gap <= (1 - gamma) / (2 tau(L_star, gamma))``;
    the second value then bounds ``tau(A + B K_hat, (1 + gamma) / 2)``, and is
    ``inf`` otherwise.
    """
    if not (spectral_radius(sol.L) < gamma < 1.0):
        raise DomainError(f"gamma={gamma:.6g} must lie strictly between rho(L) and 1")
    delta = 7.0 * consts.gamma_star ** 3 * k_gap
    return perturbed_stability_certificate(sol.L, delta, gamma)


def gap_bound_meta(consts: SystemConstants, f_eps: float, gamma: float, tau_L: float,
                   d: int, sigma_w: float) -> BoundReport:
    """``200 sigma_w^2 d Gamma^9 tau_L^2 / (1 - gamma^2) f^2``.

    Applicable when the value is at most ``sigma_w^2`` and the gain mismatch
    ``7 Gamma^3 f`` is small enough for the stability certificate.
    """
    if f_eps < 0:
        raise DomainError("f(eps) must be nonnegative")
    if not (0.0 <= gamma < 1.0):
        raise DomainError(f"gamma must lie in [0, 1), got {gamma}")
    G = consts.gamma_star
    value = META_CONSTANT * sigma_w ** 2 * d * G ** 9 * tau_L ** 2 / (1.0 - gamma ** 2) * f_eps ** 2
    slacks = {
        "bound_le_noise": _slack(value, sigma_w ** 2),
        "gain_stability": _slack(7.0 * G ** 3 * f_eps, (1.0 - gamma) / (2.0 * tau_L)),
        "f_lt_one": _slack(f_eps, 1.0),
    }
    components = {"gamma_star": G, "tau_L": tau_L, "gamma": gamma, "d": d, "f_eps": f_eps,
                  "sigma_w": sigma_w}
    return _report("gap_meta", value, slacks, components)


def gap_bound_fast_rate(sys: LinearSystem, cost: CostParams, sol: RiccatiSolution, eps: float,
                        rho: Optional[float] = None, ell: Optional[int] = None,
                        gamma: Optional[float] = None, sigma_w: float = 1.0,
                        d: Optional[int] = None, constant: float = FAST_RATE_CONSTANT) -> BoundReport:
    """Suboptimality bound with all factors explicit and ``constant`` in front.

    ``constant * sigma_w^2 d ell^5 Gamma^15 tau(A, rho)^6 beta^{4(ell-1)}
    tau(L, gamma)^2 / (1 - gamma^2) cond^2 (1 + 1/nu)^2 eps^2`` where ``cond``
    is the cost condition number. The default constant composes the meta
    bound's 200 with the square of the direct Riccati bound's 32; the
    composed value itself (meta bound evaluated at the direct bound) is
    reported as ``components["composed"]`` and never exceeds the displayed one.
    """
    consts = SystemConstants.from_lqr(sys, cost, sol)
    if gamma is None:
        gamma = default_gamma(sol.L)
    if d is None:
        d = sys.d
    direct = dare_bound_direct(sys, cost, sol, eps, rho, ell)
    c = direct.components
    tL = tau(sol.L, gamma, allow_boundary=True).tau
    G = consts.gamma_star
    value = (constant * sigma_w ** 2 * d * c["ell"] ** 5 * G ** 15 * c["tau_A"] ** 6
             * c["beta"] ** (4 * (c["ell"] - 1)) * tL ** 2 / (1.0 - gamma ** 2)
             * c["condition_number"] ** 2 * (1.0 + 1.0 / c["nu"]) ** 2 * eps ** 2)
    meta = gap_bound_meta(consts, direct.bound_value, gamma, tL, d, sigma_w)
    slacks = {"bound_le_noise": _slack(value, sigma_w ** 2),
              "d_le_n": 0.0 if d <= sys.n else -math.inf}
    slacks.update({f"direct_{k}": v for k, v in direct.slacks.items()})
    slacks.update({f"meta_{k}": v for k, v in meta.slacks.items()})
    components = dict(c)
    components.update({"constant": constant, "gamma_star": G, "tau_L": tL, "gamma": gamma,
                       "d": d, "sigma_w": sigma_w, "direct_bound": direct.bound_value,
                       "composed": meta.bound_value})
    return _report("gap_fast_rate", value, slacks, components)
