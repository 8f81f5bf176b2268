"""Certainty-equivalent LQR/LQG analysis: Riccati solvers, perturbation bounds,
exact suboptimality gaps and an adaptive-control regret simulator."""

__version__ = "0.1.0"

from .errors import (CerteqError, ControllabilityError, ConvergenceError, DetectabilityError,
                     DimensionError, DivergenceError, DomainError, FitError, SchemaError,
                     ShapeError, SingularityError, StabilityError, StabilizabilityError)
from .systems import CostParams, LinearSystem, LQGSystem
from .riccati import (RiccatiSolution, filter_residual, kalman_gain, lqr_gain, riccati_residual,
                      solve_dare, solve_dlyap)
from .transient import (ControllabilityReport, TransientReport, controllability, hinf_norm,
                        power_perturb_bounds, tau)
from .bounds import (BoundReport, SystemConstants, dare_bound_direct, dare_bound_fixed_point,
                     gain_perturb_bound, gap_bound_fast_rate, gap_bound_meta, stability_margin_check)
from .lqr_eval import GapReport, cost_of_gain, exact_gap, monte_carlo_cost, simulate_rollout
from .lqg import (LiftedClosedLoop, ObserverController, build_lifted, certainty_equivalent_oc,
                  lqg_cost, lqg_gap_bound, lqg_gap_bound_fast_rate, lqg_optimal)
from .adaptive import AdaptiveConfig, RegretTrace, fit_regret_slope, least_squares_id, run_adaptive
