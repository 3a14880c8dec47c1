"""Command-line interface.

    rlqr solve-lqr --input inst.json [--delta D] [--check] [--output sol.json] [--csv traj.csv]
    rlqr solve-ocp --problem double-integrator [--horizon N] [--dt H] [--x0 5,0] ...
    rlqr gen --n N --nx NX --nu NU --delta D --seed S [--output inst.json]

Exit codes: 0 success, 2 bad input, 3 solver failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import models, oracle, reglqr
from .dense import NotPositiveDefinite
from .instances import (
    FORMAT_VERSION, InstanceError, dumps, load_problem, problem_to_dict, solution_to_dict,
    trajectory_csv,
)
from .ipm import IpmSettings
from .ocp import solve_ocp

EXIT_OK, EXIT_INPUT, EXIT_SOLVER = 0, 2, 3
CHECK_TOL = 1e-8


def _err(msg: str) -> None:
    print(f"rlqr: {msg}", file=sys.stderr)


def _emit(text: str, path: Optional[str]) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def cmd_solve_lqr(args: argparse.Namespace) -> int:
    try:
        raw = Path(args.input).read_bytes()
        p = load_problem(raw.decode("utf-8"))
    except OSError as exc:
        _err(f"cannot read {args.input}: {exc}")
        return EXIT_INPUT
    except UnicodeDecodeError as exc:
        _err(f"input is not UTF-8 (byte offset {exc.start})")
        return EXIT_INPUT
    except InstanceError as exc:
        _err(str(exc))
        return EXIT_INPUT
    if args.delta is not None:
        if not args.delta >= 0:
            _err("--delta must be >= 0")
            return EXIT_INPUT
        p = p.with_delta(args.delta)

    try:
        sol = reglqr.solve(p)
    except NotPositiveDefinite as exc:
        _err(f"solver failed: {exc}")
        return EXIT_SOLVER
    residual = oracle.reglqr_kkt_residual(p, sol)

    discrepancy = None
    if args.check:
        try:
            ref = oracle.oracle_solve_reglqr(p)
        except oracle.OracleSingular as exc:
            _err(f"oracle failed: {exc}")
            return EXIT_SOLVER
        discrepancy = oracle.solution_discrepancy(sol, ref)
        print(f"oracle discrepancy: {discrepancy:.3e}", file=sys.stderr)

    _emit(dumps(solution_to_dict(sol, residual, args.check, discrepancy)), args.output)
    if args.csv:
        Path(args.csv).write_text(trajectory_csv(sol.x, sol.u, sol.y))
    if discrepancy is not None and not discrepancy <= CHECK_TOL:
        _err(f"oracle check failed: discrepancy {discrepancy:.3e} > {CHECK_TOL:.0e}")
        return EXIT_SOLVER
    return EXIT_OK


def _parse_x0(text: Optional[str]) -> Optional[List[float]]:
    if text is None:
        return None
    return [float(t) for t in text.replace(",", " ").split()]


def cmd_solve_ocp(args: argparse.Namespace) -> int:
    try:
        x0 = _parse_x0(args.x0)
        settings = IpmSettings(mu0=args.mu0, eta0=args.eta0, tol_kkt=args.tol,
                               max_iters=args.max_iters)
    except ValueError as exc:
        _err(str(exc))
        return EXIT_INPUT
    kwargs = {"N": args.horizon, "dt": args.dt}
    if x0 is not None:
        kwargs["x0"] = x0
    if args.horizon < 1 or not args.dt > 0:
        _err("--horizon must be >= 1 and --dt > 0")
        return EXIT_INPUT
    try:
        ocp = models.MODELS[args.problem](**kwargs)
    except ValueError as exc:
        _err(str(exc))
        return EXIT_INPUT
    xs0 = us0 = None
    if args.problem == "unicycle":
        xs0, us0 = models.unicycle_initial_guess(ocp)

    result = solve_ocp(ocp, settings, xs0, us0)
    rep = result.report
    doc = {"format": FORMAT_VERSION, "problem": args.problem, "horizon": args.horizon,
           "dt": args.dt, **rep.to_dict()}
    _emit(json.dumps(doc, indent=2) + "\n", args.output)
    if args.csv:
        Path(args.csv).write_text(trajectory_csv(result.x, result.u, result.y_dyn))
    print(f"{rep.status.value}: {rep.iterations} iterations, kkt residual {rep.kkt_residual:.3e}",
          file=sys.stderr)
    return EXIT_OK if rep.success else EXIT_SOLVER


def cmd_gen(args: argparse.Namespace) -> int:
    if args.n < 0 or args.nx < 1 or args.nu < 1 or not args.delta >= 0:
        _err("need --n >= 0, --nx >= 1, --nu >= 1, --delta >= 0")
        return EXIT_INPUT
    rng = np.random.default_rng(args.seed)
    p = reglqr.random_problem(rng, args.n, args.nx, args.nu, args.delta)
    _emit(dumps(problem_to_dict(p)), args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rlqr", description="Regularized LQR / IPM trajectory optimization")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve-lqr", help="solve a regularized LQR instance from JSON")
    p.add_argument("--input", required=True)
    p.add_argument("--delta", type=float, default=None, help="override the instance's delta")
    p.add_argument("--check", action="store_true", help="verify against the dense KKT oracle")
    p.add_argument("--output", default=None, help="solution JSON path (default stdout)")
    p.add_argument("--csv", default=None, help="optional per-stage CSV path")
    p.set_defaults(func=cmd_solve_lqr)

    p = sub.add_parser("solve-ocp", help="solve a built-in nonlinear benchmark")
    p.add_argument("--problem", required=True, choices=sorted(models.MODELS))
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--dt", type=float, default=0.1)
    p.add_argument("--x0", default=None, help="initial state, comma separated")
    p.add_argument("--mu0", type=float, default=1e-1)
    p.add_argument("--eta0", type=float, default=1e2)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--output", default=None, help="report JSON path (default stdout)")
    p.add_argument("--csv", default=None, help="trajectory CSV path")
    p.set_defaults(func=cmd_solve_ocp)

    p = sub.add_parser("gen", help="generate a random instance")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--nx", type=int, required=True)
    p.add_argument("--nu", type=int, required=True)
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", default=None)
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "horizon", 0) is None:
        args.horizon = 20 if args.problem == "double-integrator" else 30
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
