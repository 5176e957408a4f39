"""Command-line front end: CSV in, JSON RunReport out, reproducible seeds.

Formats are bit-exact contracts:
  input   CSV, one time step per line, comma-separated values, optional
          ``#`` comment lines, no header; malformed lines are reported with
          their line number and exit code 2.
  config  ``key=value`` lines overriding solver constants (see config.Params).
  output  with --json, a single JSON object (schema field ``schema: 1``) on
          standard output; identical seed and inputs give byte-identical
          JSON modulo wall_time_ms. Without --json, the same fields as
          ``key value`` lines.
  exit    0 success; 2 input error; 3 with --strict when the report carries a
          numerical failure flag (rank deficiency, non-convergence).

Ratios floor both numerator and denominator at 1e-12 times the data scale so
consistent systems report exactly 1.0 instead of noise quotients.
"""
from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import oracle
from .config import DEFAULTS, Params, load_config
from .kernel_ar import (
    KernelARProblem,
    general_kernel_solve,
    get_kernel,
    solve_poly2,
)
from .lowrank import lowrank_approx
from .lpreg import FAILURE_FLAGS, solve_lp
from .lsq import solve_autoregression, solve_dynamical, solve_l2
from .operators import DenseOperator, ToeplitzOperator, dynamical_design_operator
from .util import as_rng

REPORT_FIELDS = (
    "schema",
    "solver",
    "n",
    "d",
    "p",
    "kernel",
    "eps",
    "delta",
    "seed",
    "residual",
    "oracle",
    "ratio",
    "wall_time_ms",
    "matvec_count",
    "kernel_eval_count",
    "b_read_count",
    "flags",
    "x",
)


class CLIError(Exception):
    """Input problem: message is printed to stderr and the process exits 2."""


def read_csv(path: str) -> np.ndarray:
    """Parse the CSV time-series format into an (n, p) float array.

    One time step per line, p comma-separated values, ``#`` comments and
    blank lines skipped. Errors carry the 1-based line number.
    """
    rows = []
    width = None
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise CLIError(f"{path}: {exc.strerror or exc}") from None
    with fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = [v.strip() for v in line.split(",")]
            try:
                values = [float(v) for v in parts]
            except ValueError:
                raise CLIError(f"{path}:{lineno}: not a number: {line!r}") from None
            if any(not np.isfinite(v) for v in values):
                raise CLIError(f"{path}:{lineno}: non-finite value")
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise CLIError(
                    f"{path}:{lineno}: expected {width} values per line, got {len(values)}"
                )
            rows.append(values)
    if not rows:
        raise CLIError(f"{path}: no data lines")
    return np.asarray(rows, dtype=float)


def read_scalar_series(path: str) -> np.ndarray:
    data = read_csv(path)
    if data.shape[1] != 1:
        raise CLIError(f"{path}: expected one value per line, got {data.shape[1]}")
    return data[:, 0]


def load_params(args) -> Params:
    if getattr(args, "config", None):
        try:
            return load_config(args.config)
        except OSError as exc:
            raise CLIError(f"{args.config}: {exc.strerror or exc}") from None
        except ValueError as exc:
            raise CLIError(f"{args.config}: {exc}") from None
    return DEFAULTS


def floored_ratio(residual: float, optimum: float, scale: float) -> float:
    floor = 1e-12 * max(scale, 0.0)
    return float(max(residual, floor) / max(optimum, floor)) if max(optimum, floor) > 0 else float("inf")


def base_report(solver: str, args, *, n, d, p=None, kernel=None) -> dict:
    return {
        "schema": 1,
        "solver": solver,
        "n": int(n),
        "d": int(d),
        "p": p,
        "kernel": kernel,
        "eps": getattr(args, "eps", None),
        "delta": getattr(args, "delta", None),
        "seed": args.seed,
        "residual": None,
        "oracle": None,
        "ratio": None,
        "wall_time_ms": None,
        "matvec_count": None,
        "kernel_eval_count": None,
        "b_read_count": None,
        "flags": [],
        "x": None,
    }


def cmd_l2(args) -> dict:
    params = load_params(args)
    data = read_csv(args.input)
    if data.shape[1] != args.d + 1:
        raise CLIError(
            f"{args.input}: l2 expects d+1 = {args.d + 1} values per line "
            f"(design then target), got {data.shape[1]}"
        )
    A = DenseOperator(data[:, :-1])
    b = data[:, -1]
    rng = as_rng(args.seed)
    sol = solve_l2(A, b, args.eps, args.delta, rng, params=params)
    rep = base_report("l2", args, n=A.n, d=A.d)
    rep["residual"] = sol.residual
    rep["matvec_count"] = sol.matvecs_used
    rep["flags"] = list(sol.flags)
    rep["x"] = sol.x.tolist()
    if args.exact:
        x_star = oracle.exact_l2(data[:, :-1], b)
        opt = float(np.linalg.norm(data[:, :-1] @ x_star - b))
        rep["oracle"] = opt
        rep["ratio"] = floored_ratio(sol.residual, opt, float(np.linalg.norm(b)))
    return rep


def _series_regression(args, solver: str) -> dict:
    params = load_params(args)
    series = read_scalar_series(args.input)
    rng = as_rng(args.seed)
    if solver == "ar":
        sol = solve_autoregression(
            series, args.d, args.eps, args.delta, rng,
            pad_origin_zero=args.pad_origin_zero, params=params,
        )
    else:
        sol = solve_dynamical(
            series, args.d, args.h, args.eps, args.delta, rng,
            use_difference=not args.no_difference,
            pad_origin_zero=args.pad_origin_zero, params=params,
        )
    full = np.concatenate([[0.0], series]) if args.pad_origin_zero else series
    rep = base_report(solver, args, n=full.size - args.d, d=args.d)
    rep["residual"] = sol.residual
    rep["matvec_count"] = sol.matvecs_used
    rep["flags"] = list(sol.flags)
    rep["x"] = sol.x.tolist()
    if args.exact:
        b = full[args.d:]
        if solver == "dyn":
            op = dynamical_design_operator(
                full, args.d, args.h, use_difference=not args.no_difference
            )
            design = oracle.materialize(op)
        else:
            design = oracle.toeplitz_dense(full[:-1], full.size - args.d, args.d)
        x_star = oracle.exact_l2(design, b)
        opt = float(np.linalg.norm(design @ x_star - b))
        rep["oracle"] = opt
        rep["ratio"] = floored_ratio(sol.residual, opt, float(np.linalg.norm(b)))
    return rep


def cmd_ar(args) -> dict:
    return _series_regression(args, "ar")


def cmd_dyn(args) -> dict:
    return _series_regression(args, "dyn")


def cmd_lp(args) -> dict:
    params = load_params(args)
    data = read_csv(args.input)
    if data.shape[1] != args.d + 1:
        raise CLIError(
            f"{args.input}: lp expects d+1 = {args.d + 1} values per line "
            f"(design then target), got {data.shape[1]}"
        )
    A = DenseOperator(data[:, :-1])
    b = data[:, -1]
    rng = as_rng(args.seed)
    sol = solve_lp(A, b, args.p_norm, args.eps, rng, params=params)
    rep = base_report("lp", args, n=A.n, d=A.d, p=args.p_norm)
    rep["residual"] = sol.cost
    rep["matvec_count"] = sol.matvecs_used
    rep["flags"] = list(sol.flags)
    rep["x"] = sol.x.tolist()
    if args.exact:
        _, opt = oracle.exact_lp(data[:, :-1], b, args.p_norm)
        rep["oracle"] = opt
        scale = float(np.sum(np.abs(b) ** args.p_norm) ** (1.0 / args.p_norm))
        rep["ratio"] = floored_ratio(sol.cost, opt, scale)
    return rep


def cmd_lowrank(args) -> dict:
    params = load_params(args)
    data = read_csv(args.input)
    A = DenseOperator(data)
    rng = as_rng(args.seed)
    res = lowrank_approx(A, args.rank, args.eps, rng, params=params)
    rep = base_report("lowrank", args, n=A.n, d=A.d)
    rep["residual"] = res.fit**2
    rep["matvec_count"] = A.matvec_count
    rep["flags"] = list(res.flags)
    if args.exact:
        s = np.linalg.svd(data, compute_uv=False)
        tail = float(np.sum(s[args.rank :] ** 2))
        rep["oracle"] = tail
        rep["ratio"] = floored_ratio(res.fit**2, tail, float(np.sum(s**2)))
    return rep


def cmd_kernel_ar(args) -> dict:
    series = read_csv(args.input)
    try:
        kernel = get_kernel(args.kernel)
        problem = KernelARProblem.from_series(series, args.d, kernel)
    except ValueError as exc:
        raise CLIError(str(exc)) from None
    sol = general_kernel_solve(problem)
    rep = base_report(
        "kernel-ar", args, n=problem.n, d=args.d, p=problem.p, kernel=kernel.name
    )
    rep["residual"] = sol.residual
    rep["kernel_eval_count"] = sol.kernel_eval_count
    rep["flags"] = list(sol.flags)
    rep["x"] = sol.x.tolist()
    if args.exact:
        _, opt, _ = oracle.exact_kernel_ar(
            problem.points, args.d, kernel.f, problem.target.points
        )
        rep["oracle"] = opt
        q = problem.target.points
        lifted_b_sq = float(np.sum(kernel(np.einsum("ik,ik->i", q, q))))
        rep["ratio"] = floored_ratio(sol.residual, opt, float(np.sqrt(max(lifted_b_sq, 0.0))))
    return rep


def cmd_poly2(args) -> dict:
    params = load_params(args)
    series = read_csv(args.input)
    try:
        problem = KernelARProblem.from_series(series, args.d, "poly2")
    except ValueError as exc:
        raise CLIError(str(exc)) from None
    rng = as_rng(args.seed)
    sol = solve_poly2(problem, args.eps, rng, params=params)
    rep = base_report("poly2", args, n=problem.n, d=args.d, p=problem.p, kernel="poly2")
    rep["residual"] = sol.sampled_residual
    rep["b_read_count"] = sol.b_reads
    rep["flags"] = list(sol.flags)
    rep["x"] = sol.x.tolist()
    if args.exact:
        lift = oracle.exact_poly2_lift(problem.points, args.d)
        b = np.concatenate(
            [np.outer(q, q).reshape(-1) for q in problem.target.points]
        )
        x_star = oracle.exact_l2(lift, b)
        opt = float(np.linalg.norm(lift @ x_star - b))
        true_res = float(np.linalg.norm(lift @ sol.x - b))
        rep["residual"] = true_res
        rep["oracle"] = opt
        rep["ratio"] = floored_ratio(true_res, opt, float(np.linalg.norm(b)))
    return rep


def cmd_bench(args) -> dict:
    params = load_params(args)
    sizes = []
    for part in args.n.split(","):
        try:
            sizes.append(int(part))
        except ValueError:
            raise CLIError(f"--n: not an integer: {part!r}") from None
    if not sizes or any(s < args.d + 2 for s in sizes):
        raise CLIError(f"--n: sizes must be at least d+2 = {args.d + 2}")
    runs = []
    for n in sizes:
        rng = np.random.default_rng([args.seed, n])
        t0 = time.perf_counter()
        if args.solver == "ar":
            series = rng.standard_normal(n)
            sol = solve_autoregression(series, args.d, args.eps, args.delta, rng, params=params)
            residual, matvecs = sol.residual, sol.matvecs_used
        elif args.solver == "l2":
            g = rng.standard_normal(n + args.d - 1)
            A = ToeplitzOperator(n, args.d, g)
            b = rng.standard_normal(n)
            sol = solve_l2(A, b, args.eps, args.delta, rng, params=params)
            residual, matvecs = sol.residual, sol.matvecs_used
        else:
            g = rng.standard_normal(n + args.d - 1)
            A = ToeplitzOperator(n, args.d, g)
            b = rng.standard_normal(n)
            sol = solve_lp(A, b, args.p_norm, args.eps, rng, params=params)
            residual, matvecs = sol.cost, sol.matvecs_used
        wall = (time.perf_counter() - t0) * 1000.0
        runs.append(
            {
                "n": n,
                "d": args.d,
                "residual": residual,
                "wall_time_ms": round(wall, 3),
                "matvec_count": matvecs,
                "flags": list(sol.flags),
            }
        )
    return {
        "schema": 1,
        "solver": f"bench-{args.solver}",
        "seed": args.seed,
        "eps": args.eps,
        "runs": runs,
    }


def emit(report: dict, as_json: bool) -> None:
    if as_json:
        print(json.dumps(report))
        return
    for key, value in report.items():
        if value is None:
            continue
        if key == "runs":
            for run in value:
                print(" ".join(f"{k}={run[k]}" for k in run))
            continue
        print(f"{key} {value}")


def report_flags(report: dict) -> set:
    flags = set(report.get("flags", ()))
    for run in report.get("runs", ()):
        flags.update(run.get("flags", ()))
    return flags


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="levsamp",
        description="Sampling-based solvers for structured regression and low-rank approximation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--eps", type=float, default=0.5, help="target accuracy in (0, 1)")
    common.add_argument("--delta", type=float, default=0.1, help="failure probability")
    common.add_argument("--seed", type=int, default=0, help="RNG seed")
    common.add_argument("--config", help="key=value file overriding solver constants")
    common.add_argument("--json", action="store_true", help="emit the report as one JSON object")
    common.add_argument(
        "--strict", action="store_true", help="exit 3 when numerical failure flags are raised"
    )
    common.add_argument(
        "--exact", action="store_true",
        help="also run the dense oracle and report oracle/ratio fields",
    )

    p_l2 = sub.add_parser("l2", parents=[common], help="sampled least squares on [A | b] rows")
    p_l2.add_argument("--input", required=True, help="CSV: d design values then the target per line")
    p_l2.add_argument("--d", type=int, required=True, help="number of design columns")
    p_l2.set_defaults(func=cmd_l2)

    p_ar = sub.add_parser("ar", parents=[common], help="scalar autoregression")
    p_ar.add_argument("--input", required=True, help="CSV: one series value per line")
    p_ar.add_argument("--d", type=int, required=True, help="autoregression order")
    p_ar.add_argument(
        "--pad-origin-zero", action="store_true",
        help="prepend a zero sample before splitting design/target",
    )
    p_ar.set_defaults(func=cmd_ar)

    p_dyn = sub.add_parser("dyn", parents=[common], help="finite-difference dynamical fit")
    p_dyn.add_argument("--input", required=True, help="CSV: one series value per line")
    p_dyn.add_argument("--d", type=int, required=True, help="system order")
    p_dyn.add_argument("--h", type=float, default=1.0, help="sampling step")
    p_dyn.add_argument("--no-difference", action="store_true", help="skip the difference factor")
    p_dyn.add_argument("--pad-origin-zero", action="store_true",
                       help="prepend a zero sample before splitting design/target")
    p_dyn.set_defaults(func=cmd_dyn)

    p_lp = sub.add_parser("lp", parents=[common], help="sampled lp regression on [A | b] rows")
    p_lp.add_argument("--input", required=True, help="CSV: d design values then the target per line")
    p_lp.add_argument("--d", type=int, required=True, help="number of design columns")
    p_lp.add_argument("--p-norm", type=float, required=True, help="norm exponent, 1 <= p < 4")
    p_lp.set_defaults(func=cmd_lp)

    p_lr = sub.add_parser("lowrank", parents=[common], help="sampled rank-k approximation")
    p_lr.add_argument("--input", required=True, help="CSV: one matrix row per line")
    p_lr.add_argument("--rank", type=int, required=True, help="target rank k")
    p_lr.set_defaults(func=cmd_lowrank)

    p_k = sub.add_parser("kernel-ar", parents=[common], help="kernel autoregression (exact, banded)")
    p_k.add_argument("--input", required=True, help="CSV: one p-dimensional point per line")
    p_k.add_argument("--d", type=int, required=True, help="autoregression order")
    p_k.add_argument("--kernel", default="poly2", help="dot-product kernel: linear, poly2, exp")
    p_k.set_defaults(func=cmd_kernel_ar)

    p_p2 = sub.add_parser("poly2", parents=[common], help="sampled degree-2 kernel autoregression")
    p_p2.add_argument("--input", required=True, help="CSV: one p-dimensional point per line")
    p_p2.add_argument("--d", type=int, required=True, help="autoregression order")
    p_p2.set_defaults(func=cmd_poly2)

    p_b = sub.add_parser("bench", parents=[common], help="per-size counter/wall-time table")
    p_b.add_argument("--solver", required=True, choices=["ar", "l2", "lp"])
    p_b.add_argument("--n", required=True, help="comma-separated problem sizes")
    p_b.add_argument("--d", type=int, default=8, help="design columns / order")
    p_b.add_argument("--p-norm", type=float, default=1.5, help="norm exponent for --solver lp")
    p_b.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    t0 = time.perf_counter()
    try:
        report = args.func(args)
    except (CLIError, ValueError) as exc:
        # Solver ValueErrors at this boundary are input problems (bad p, rank
        # out of range, series too short), same contract as CLIError.
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if "wall_time_ms" in report:
        report["wall_time_ms"] = round((time.perf_counter() - t0) * 1000.0, 3)
    emit(report, args.json)
    if args.strict and report_flags(report) & FAILURE_FLAGS:
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
