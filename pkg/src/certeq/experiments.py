"""Reproducible sweeps behind the CLI tables and the acceptance checks.

Every random draw comes from ``make_rng(seed, stream)`` with a stream index
derived from the grid position and draw number, so results do not depend
on the execution order or on the number of worker threads.
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .adaptive import AdaptiveConfig, RegretTrace, fit_regret_slope, pooled_regret, run_adaptive_batch
from .bounds import (SystemConstants, dare_bound_direct, dare_bound_fixed_point, gap_bound_fast_rate,
                     gap_bound_meta)
from .errors import CerteqError
from .lqg import build_lifted, certainty_equivalent_oc, lqg_cost, lqg_optimal
from .lqr_eval import exact_gap, make_rng
from .matrix import operator_norm, spectral_radius
from .riccati import solve_dare
from .systems import CostParams, LinearSystem, LQGSystem
from .transient import default_gamma, tau

STREAM_STRIDE = 100_000


def thread_count() -> int:
    """Worker threads allowed by ``CERTEQ_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("CERTEQ_THREADS", "1")))
    except ValueError:
        return 1


def parallel_map(fn: Callable, items: Sequence) -> List:
    """Ordered map over ``items`` using at most ``thread_count()`` threads."""
    workers = min(thread_count(), max(1, len(items)))
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def log_grid(lo: float, hi: float, points: int) -> np.ndarray:
    return np.logspace(math.log10(lo), math.log10(hi), points)


def loglog_fit(x, y):
    """``(slope, intercept, r2)`` of ``log y`` against ``log x``."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss = float(np.sum((ly - ly.mean()) ** 2))
    return float(slope), float(intercept), (1.0 - float(np.sum(resid ** 2)) / ss if ss > 0 else 1.0)


def random_direction(rng: np.random.Generator, shape, norm: float) -> np.ndarray:
    """Gaussian matrix rescaled to operator norm ``norm``."""
    G = rng.standard_normal(shape)
    return G * (norm / operator_norm(G))


def random_system(rng: np.random.Generator, n: int, d: int, radius: float = 0.9) -> LinearSystem:
    """Gaussian ``A`` rescaled to spectral radius ``radius`` and Gaussian ``B``."""
    A = rng.standard_normal((n, n))
    A *= radius / max(spectral_radius(A), 1e-12)
    return LinearSystem(A, rng.standard_normal((n, d)))


def default_gap_system(seed: int = 7):
    """Fixed 3-state, 2-input instance used by the gap sweep."""
    rng = make_rng(seed, 0)
    return random_system(rng, 3, 2, 0.9), CostParams(np.eye(3), np.eye(2))


def regret_system():
    """Stable 3-state, 2-input instance and warm-start gain for regret runs."""
    A = np.array([[0.9, 0.2, 0.0], [0.0, 0.8, 0.1], [0.1, 0.0, 0.7]])
    B = np.array([[1.0, 0.0], [0.5, 1.0], [0.0, 0.5]])
    K0 = np.array([[-0.5, -0.2, 0.0], [0.1, -0.3, -0.2]])
    return LinearSystem(A, B), CostParams(np.eye(3), np.eye(2)), K0


def beta_system(beta: float):
    return LinearSystem(1.01 * np.eye(2), np.diag([1.0, beta])), CostParams(np.eye(2), np.eye(2))


def default_lqg_plant(seed: int = 11) -> LQGSystem:
    rng = make_rng(seed, 0)
    sys = random_system(rng, 3, 2, 0.9)
    C = rng.standard_normal((2, 3))
    return LQGSystem.isotropic(sys.A, sys.B, C, np.eye(2), np.eye(2), 1.0, 0.5)


# ---------------------------------------------------------------- gap sweep

@dataclass
class SweepPoint:
    eps: float
    values: np.ndarray
    extras: Dict[str, float] = field(default_factory=dict)

    @property
    def median(self) -> float:
        return float(np.nanmedian(self.values))


def perturbed_gap(sys, cost, sol, eps, rng, sigma_w=1.0) -> float:
    """Exact gap of the certainty-equivalent gain for one random ``eps``-perturbation."""
    Ah = sys.A + random_direction(rng, sys.A.shape, eps)
    Bh = sys.B + random_direction(rng, sys.B.shape, eps)
    try:
        Kh = solve_dare(LinearSystem(Ah, Bh), cost).K
        return exact_gap(sys, cost, sol, Kh, sigma_w).gap
    except CerteqError:
        return math.nan


def gap_sweep(sys: LinearSystem, cost: CostParams, eps_grid, draws: int, seed: int,
              sigma_w: float = 1.0) -> List[SweepPoint]:
    sol = solve_dare(sys, cost)
    consts = SystemConstants.from_lqr(sys, cost, sol)
    gamma = default_gamma(sol.L)
    tL = tau(sol.L, gamma).tau

    def point(i):
        eps = float(eps_grid[i])
        vals = np.array([perturbed_gap(sys, cost, sol, eps, make_rng(seed, i * STREAM_STRIDE + k), sigma_w)
                         for k in range(draws)])
        extras = {}
        try:
            direct = dare_bound_direct(sys, cost, sol, eps)
            meta = gap_bound_meta(consts, direct.bound_value, gamma, tL, sys.d, sigma_w)
            fast = gap_bound_fast_rate(sys, cost, sol, eps, gamma=gamma, sigma_w=sigma_w)
            extras = {"gap_bound_meta": meta.bound_value, "meta_applicable": meta.applicable,
                      "gap_bound_fast_rate": fast.bound_value, "fast_rate_applicable": fast.applicable}
        except CerteqError:
            extras = {"gap_bound_meta": math.nan, "meta_applicable": False,
                      "gap_bound_fast_rate": math.nan, "fast_rate_applicable": False}
        return SweepPoint(eps=eps, values=vals, extras=extras)

    return parallel_map(point, list(range(len(eps_grid))))


def sweep_fit(points: Sequence[SweepPoint]):
    """Log-log fit of the median gap against eps."""
    xs = [p.eps for p in points if p.median > 0]
    ys = [p.median for p in points if p.median > 0]
    return loglog_fit(xs, ys)


# --------------------------------------------------------------- beta sweep

@dataclass
class BetaRow:
    beta: float
    bound93: float
    bound_direct: float
    applicable93: bool
    applicable_direct: bool

    @property
    def ratio(self) -> float:
        return self.bound93 / self.bound_direct


def beta_sweep(betas, eps: float) -> List[BetaRow]:
    rows = []
    for b in betas:
        sys, cost = beta_system(float(b))
        sol = solve_dare(sys, cost)
        f = dare_bound_fixed_point(sys, cost, sol, eps)
        d = dare_bound_direct(sys, cost, sol, eps, ell=1)
        rows.append(BetaRow(float(b), f.bound_value, d.bound_value, f.applicable, d.applicable))
    return rows


def beta_fits(rows: Sequence[BetaRow]):
    """Slopes of each bound against ``1/beta`` on log-log axes."""
    inv = [1.0 / r.beta for r in rows]
    return {"bound93": loglog_fit(inv, [r.bound93 for r in rows]),
            "boundDirect": loglog_fit(inv, [r.bound_direct for r in rows]),
            "ratio": loglog_fit(inv, [r.ratio for r in rows])}


# ---------------------------------------------------------------- lqg sweep

def perturbed_lqg_gap(plant: LQGSystem, opt, eps: float, rng) -> float:
    """Cost excess of the certainty-equivalent controller built from ``eps``-perturbed estimates."""
    est = (plant.A + random_direction(rng, plant.A.shape, eps),
           plant.B + random_direction(rng, plant.B.shape, eps),
           plant.C + random_direction(rng, plant.C.shape, eps),
           opt.Lkf_star + random_direction(rng, opt.Lkf_star.shape, eps))
    try:
        oc = certainty_equivalent_oc(est, (plant.Q, plant.R))
        return lqg_cost(plant, oc) - opt.J_star
    except CerteqError:
        return math.nan


def lqg_sweep(plant: LQGSystem, eps_grid, draws: int, seed: int) -> List[SweepPoint]:
    opt = lqg_optimal(plant)

    def point(i):
        eps = float(eps_grid[i])
        vals = np.array([perturbed_lqg_gap(plant, opt, eps, make_rng(seed, i * STREAM_STRIDE + k))
                         for k in range(draws)])
        return SweepPoint(eps=eps, values=vals)

    return parallel_map(point, list(range(len(eps_grid))))


# ------------------------------------------------------------------ regret

@dataclass
class RegretResult:
    traces: List[RegretTrace]
    pooled: np.ndarray
    pooled_fit: tuple
    failures: int

    @property
    def median_final(self) -> float:
        return float(np.median([t.regret[-1] for t in self.traces if not t.failed]))


def regret_experiment(sys, cost, K0, horizon: int, seeds: Sequence[int], exponent: float,
                      scale: float = 1.0, window: float = 0.5, epoch_base: int = 200) -> RegretResult:
    cfg = AdaptiveConfig(horizon=horizon, exploration_exponent=exponent, exploration_scale=scale,
                         K0=K0, epoch_base=epoch_base)
    # Batches of seeds run on separate threads; each seed keeps its own stream.
    seeds = list(seeds)
    chunks = [seeds[i::thread_count()] for i in range(min(thread_count(), len(seeds)))]
    parts = parallel_map(lambda ch: run_adaptive_batch(sys, cost, cfg, ch), chunks)
    by_seed = {tr.seed: tr for part in parts for tr in part}
    traces = [by_seed[s] for s in seeds]
    pooled = pooled_regret(traces)
    return RegretResult(traces=traces, pooled=pooled, pooled_fit=fit_regret_slope(pooled, window),
                        failures=sum(t.failed for t in traces))
