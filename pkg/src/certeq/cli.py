"""Batch command-line front end.

Exit codes: 0 success, 1 I/O, usage or schema error, 2 solver error. On
failure a JSON object ``{"error": {"kind": ..., "message": ...}}`` is written
to stdout. CSV tables start with ``#`` metadata lines listing every setting
that influenced the numbers.
"""

import argparse
import json
import math
import sys
from typing import List, Optional

import numpy as np

from . import __version__
from .bounds import (BoundReport, SystemConstants, dare_bound_direct, dare_bound_fixed_point, gain_perturb_bound,
                     gap_bound_fast_rate, gap_bound_meta)
from .errors import CerteqError, SchemaError
from .experiments import (beta_fits, beta_sweep, default_gap_system, default_lqg_plant, gap_sweep,
                          log_grid, lqg_sweep, regret_experiment, regret_system, sweep_fit)
from .io import SystemFile, matrix_to_json, write_csv
from .lqg import build_lifted, lqg_constants, lqg_eps_bar, lqg_gap_bound, lqg_gap_bound_fast_rate, lqg_optimal
from .matrix import as_mat, min_singular_value, operator_norm, spectral_radius
from .riccati import filter_residual, kalman_gain, riccati_residual, solve_dare
from .transient import default_gamma, default_rho, tau


class UsageError(Exception):
    kind = "usage"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _float_list(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {text!r}") from exc


def _grid(text: str) -> List[float]:
    """``lo:hi:n`` for a log-spaced grid, otherwise an explicit comma list."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise argparse.ArgumentTypeError("log grid must be lo:hi:n")
        try:
            return [float(x) for x in log_grid(float(parts[0]), float(parts[1]), int(parts[2]))]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc
    return _float_list(text)


def _out(args):
    return open(args.output, "w", encoding="utf-8", newline="\n") if args.output else sys.stdout


def _emit(args, header, rows, meta):
    meta = [("certeq", __version__), ("command", args.command)] + list(meta)
    stream = _out(args)
    try:
        write_csv(stream, header, rows, meta)
    finally:
        if stream is not sys.stdout:
            stream.close()


def _dump(obj):
    sys.stdout.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ------------------------------------------------------------------ commands

def cmd_solve(args) -> int:
    sf = SystemFile.load(args.system)
    sys_ = sf.linear_system()
    cost = sf.cost()
    sol = solve_dare(sys_, cost)
    gamma = args.gamma if args.gamma is not None else default_gamma(sol.L)
    out = {
        "P": matrix_to_json(sol.P), "K": matrix_to_json(sol.K), "L": matrix_to_json(sol.L),
        "residual": sol.residual, "rho_L": spectral_radius(sol.L), "gamma": gamma,
        "tau_L": tau(sol.L, gamma, allow_boundary=True).tau, "method": sol.method,
        "iterations": sol.iterations,
    }
    if sf.has_output:
        plant = sf.lqg_system()
        Lkf, Sigma = kalman_gain(plant)
        opt = lqg_optimal(plant)
        out.update({"Lkf": matrix_to_json(Lkf), "Sigma": matrix_to_json(Sigma),
                    "filter_residual": filter_residual(Sigma, plant), "J_star": opt.J_star})
    _dump(out)
    return 0


def cmd_verify(args) -> int:
    sf = SystemFile.load(args.system)
    sys_, cost = sf.linear_system(), sf.cost()
    with open(args.solution, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        P = as_mat(json.loads(text)["P"], "P")
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{args.solution}: cannot read key 'P': {exc}") from exc
    if P.shape != (sys_.n, sys_.n):
        raise SchemaError(f"{args.solution}: key 'P' has shape {P.shape}, expected {(sys_.n, sys_.n)}")
    residual = riccati_residual(P, sys_, cost)
    tol = args.tol * (1.0 + operator_norm(P))
    ok = residual <= tol
    _dump({"residual": residual, "tolerance": tol, "ok": bool(ok)})
    return 0 if ok else 2


def _bound_rows(reports):
    keys = sorted({k for r in reports for k in r.components})
    header = ["name", "value", "applicable", "margin"] + keys
    rows = [[r.name, r.bound_value, r.applicable, r.applicability_margin]
            + [r.components.get(k, "") for k in keys] for r in reports]
    return header, rows


def cmd_bounds(args) -> int:
    sf = SystemFile.load(args.system)
    sys_, cost = sf.linear_system(), sf.cost()
    sol = solve_dare(sys_, cost)
    consts = SystemConstants.from_lqr(sys_, cost, sol)
    gamma = args.gamma if args.gamma is not None else default_gamma(sol.L)
    rho = args.rho if args.rho is not None else default_rho(sys_.A)
    tL = tau(sol.L, gamma, allow_boundary=True).tau
    fixed = dare_bound_fixed_point(sys_, cost, sol, args.eps, gamma=gamma)
    direct = dare_bound_direct(sys_, cost, sol, args.eps, rho=rho, ell=args.ell)
    reports = [fixed, direct]
    f = direct.bound_value
    if f < 1.0:
        kval = gain_perturb_bound(consts, f, min_singular_value(cost.R))
        reports.append(BoundReport("gain_perturb", kval, True, 0.0,
                                   {"gamma_star": consts.gamma_star, "f_eps": f}))
    reports.append(gap_bound_meta(consts, f, gamma, tL, sys_.d, sf.sigma_w))
    reports.append(gap_bound_fast_rate(sys_, cost, sol, args.eps, rho=rho, ell=args.ell, gamma=gamma,
                                       sigma_w=sf.sigma_w))
    if sf.has_output:
        plant = sf.lqg_system()
        opt = lqg_optimal(plant)
        lconsts = lqg_constants(plant, opt)
        N = build_lifted(plant, opt.controller(plant)).Nhat
        g_n = args.gamma if args.gamma is not None else default_gamma(N)
        tN = tau(N, g_n, allow_boundary=True).tau
        eps_bar, _ = lqg_eps_bar(plant, opt, lconsts, args.eps, g_n)
        reports.append(lqg_gap_bound(plant, lconsts, eps_bar, g_n, tN))
        reports.append(lqg_gap_bound_fast_rate(plant, lconsts, args.eps, g_n, opt=opt))
    header, rows = _bound_rows(reports)
    meta = [("system", args.system), ("eps", args.eps), ("gamma", gamma), ("rho", rho),
            ("ell", direct.components["ell"]), ("sigma_w", sf.sigma_w)]
    _emit(args, header, rows, meta)
    return 0


SWEEP_HEADER = ["kind", "eps", "gap_median", "gap_q25", "gap_q75", "failures",
                "gap_bound_meta", "meta_applicable", "gap_bound_fast_rate", "fast_rate_applicable",
                "slope", "intercept", "r2"]


def _sweep_rows(points, fit, with_bounds):
    rows = []
    for p in points:
        v = p.values[np.isfinite(p.values)]
        q25, q75 = (np.quantile(v, [0.25, 0.75]) if v.size else (math.nan, math.nan))
        row = ["point", p.eps, p.median, float(q25), float(q75), int(np.sum(~np.isfinite(p.values)))]
        if with_bounds:
            e = p.extras
            row += [e["gap_bound_meta"], e["meta_applicable"], e["gap_bound_fast_rate"],
                    e["fast_rate_applicable"]]
        else:
            row += ["", "", "", ""]
        rows.append(row + ["", "", ""])
    rows.append(["fit", "", "", "", "", "", "", "", "", ""] + list(fit))
    return rows


def _load_lqr(args):
    if args.system:
        sf = SystemFile.load(args.system)
        return sf.linear_system(), sf.cost(), sf.sigma_w, args.system
    sys_, cost = default_gap_system()
    return sys_, cost, 1.0, "builtin:gap"


def cmd_gap_sweep(args) -> int:
    sys_, cost, sigma_w, source = _load_lqr(args)
    points = gap_sweep(sys_, cost, args.eps_grid, args.seeds, args.seed, sigma_w)
    fit = sweep_fit(points)
    meta = [("system", source), ("eps_grid", ",".join("%.17g" % e for e in args.eps_grid)),
            ("draws_per_point", args.seeds), ("seed", args.seed), ("sigma_w", sigma_w),
            ("gamma", "default (1 + rho(L))/2"), ("rho", "default 1.001 rho(A) + 1e-6"),
            ("ell", "default smallest full-rank horizon"), ("statistic", "median")]
    _emit(args, SWEEP_HEADER, _sweep_rows(points, fit, True), meta)
    return 0


def cmd_beta_sweep(args) -> int:
    rows = beta_sweep(args.beta_grid, args.eps)
    fits = beta_fits(rows)
    header = ["kind", "beta", "bound93", "boundDirect", "ratio", "applicable93", "applicableDirect",
              "slope", "intercept", "r2"]
    out = [["point", r.beta, r.bound93, r.bound_direct, r.ratio, r.applicable93, r.applicable_direct,
            "", "", ""] for r in rows]
    for name in ("bound93", "boundDirect", "ratio"):
        out.append([f"fit_{name}", "", "", "", "", "", ""] + list(fits[name]))
    meta = [("system", "A = 1.01 I2, B = diag(1, beta), Q = R = I2"), ("eps", args.eps),
            ("gamma", "default (1 + rho(L))/2"), ("rho", "default 1.001 rho(A) + 1e-6"), ("ell", 1),
            ("slope_axis", "log(1/beta)")]
    _emit(args, header, out, meta)
    return 0


def cmd_lqg_sweep(args) -> int:
    if args.system:
        plant = SystemFile.load(args.system).lqg_system()
        source = args.system
    else:
        plant, source = default_lqg_plant(), "builtin:lqg"
    points = lqg_sweep(plant, args.eps_grid, args.seeds, args.seed)
    fit = sweep_fit(points)
    meta = [("system", source), ("eps_grid", ",".join("%.17g" % e for e in args.eps_grid)),
            ("draws_per_point", args.seeds), ("seed", args.seed),
            ("perturbed", "A, B, C, Kalman gain"), ("statistic", "median")]
    _emit(args, SWEEP_HEADER, _sweep_rows(points, fit, False), meta)
    return 0


def cmd_regret(args) -> int:
    if args.system:
        sf = SystemFile.load(args.system)
        sys_, cost = sf.linear_system(), sf.cost()
        if args.K0 is None:
            raise SchemaError("--K0 is required together with --system")
        K0 = np.array(json.loads(args.K0), dtype=float)
        source = args.system
    else:
        sys_, cost, K0 = regret_system()
        source = "builtin:regret"
    T = args.T
    checkpoints = np.unique(np.round(np.logspace(0, np.log10(T), args.points)).astype(int))
    header = ["kind", "exponent", "seed", "t", "regret", "slope", "intercept", "r2",
              "median_final_regret", "failures"]
    rows = []
    seeds = list(range(args.seed, args.seed + args.seeds))
    for ex in args.exponent:
        res = regret_experiment(sys_, cost, K0, T, seeds, ex, args.scale, args.window)
        for tr in res.traces:
            for t in checkpoints:
                rows.append(["trace", ex, tr.seed, int(t), float(tr.regret[t - 1]), "", "", "", "", ""])
        for t in checkpoints:
            rows.append(["pooled", ex, "", int(t), float(res.pooled[t - 1]), "", "", "", "", ""])
        rows.append(["fit", ex, "", "", ""] + list(res.pooled_fit) + [res.median_final, res.failures])
    meta = [("system", source), ("T", T), ("seeds", f"{seeds[0]}..{seeds[-1]}"),
            ("exponents", ",".join("%.17g" % e for e in args.exponent)), ("exploration_scale", args.scale),
            ("epoch_base", 200), ("ridge_lambda", 1e-6), ("fit_window", args.window),
            ("pooling", "mean regret over non-failed seeds")]
    _emit(args, header, rows, meta)
    return 0


# -------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="certeq", description="Certainty-equivalent LQR/LQG analysis toolkit.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("solve", help="solve the Riccati equation(s) for a system file")
    s.add_argument("system")
    s.add_argument("--gamma", type=float)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("verify", help="check a solve result against a system file")
    s.add_argument("system")
    s.add_argument("solution")
    s.add_argument("--tol", type=float, default=1e-10)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("bounds", help="evaluate every perturbation bound")
    s.add_argument("system")
    s.add_argument("--eps", type=float, required=True)
    s.add_argument("--gamma", type=float)
    s.add_argument("--rho", type=float)
    s.add_argument("--ell", type=int)
    s.add_argument("--output")
    s.set_defaults(func=cmd_bounds)

    for name, func, grid in (("gap-sweep", cmd_gap_sweep, "1e-4:0.031622776601683791:8"),
                             ("lqg-sweep", cmd_lqg_sweep, "1e-4:0.031622776601683791:8")):
        s = sub.add_parser(name, help="suboptimality gap versus perturbation size")
        s.add_argument("--system")
        s.add_argument("--eps-grid", type=_grid, default=_grid(grid))
        s.add_argument("--seeds", type=int, default=20, help="perturbation draws per grid point")
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--output")
        s.set_defaults(func=func)

    s = sub.add_parser("beta-sweep", help="bound separation on the weakly actuated example")
    s.add_argument("--beta-grid", type=_float_list, default=[0.1, 0.05, 0.025, 0.0125])
    s.add_argument("--eps", type=float, default=1e-13)
    s.add_argument("--output")
    s.set_defaults(func=cmd_beta_sweep)

    s = sub.add_parser("regret", help="adaptive LQR regret traces")
    s.add_argument("--system")
    s.add_argument("--K0", help="initial gain as a JSON array (required with --system)")
    s.add_argument("--T", type=int, default=100_000)
    s.add_argument("--seeds", type=int, default=20)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--exponent", type=_float_list, default=[0.5])
    s.add_argument("--scale", type=float, default=1.0)
    s.add_argument("--window", type=float, default=0.5)
    s.add_argument("--points", type=int, default=60, help="log-spaced checkpoints per trace")
    s.add_argument("--output")
    s.set_defaults(func=cmd_regret)
    return p


def _fail(kind: str, message: str, code: int) -> int:
    _dump({"error": {"kind": kind, "message": message}})
    return code


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail("usage", str(exc), 1)
    try:
        return args.func(args)
    except SchemaError as exc:
        return _fail(exc.kind, str(exc), 1)
    except OSError as exc:
        return _fail("io", str(exc), 1)
    except CerteqError as exc:
        return _fail(exc.kind, str(exc), 2)


if __name__ == "__main__":
    sys.exit(main())
