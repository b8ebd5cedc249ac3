"""Command-line entry point.

Commands: ``solve`` (run the system solver and persist surfaces/summary),
``verify-fixtures`` (audit the closed-form fixtures and the non-uniqueness
check), ``simulate`` (solve, then replay the extracted policy), and
``check-assumptions`` (run the validator and print its report).

Exit codes: 0 success, 1 input or validation error, 2 non-convergence.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path

from .grid import TimeGrid, make_backend
from .io import load_problem, write_json, write_surface_csv, write_trace_csv
from .model import COMPONENTS, ProblemError, validate_assumptions
from .scheme import DEFAULT_MAX_ITER, SchemeError, solve_system
from .strategy import simulate_policy
from .verify import check_nonuniqueness

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NO_CONVERGENCE = 2


@dataclass
class RunConfig:
    problem: str | None
    backend: str
    steps: int
    tol: float | None
    max_iter: int
    seed: int
    out: Path
    mode: int = 1
    paths: int = 10000

    def __post_init__(self):
        if self.steps < 2:
            raise ProblemError("need at least 2 time steps")
        if self.tol is not None and self.tol <= 0:
            raise ProblemError("tol must be positive")


def _config_from_args(args) -> RunConfig:
    return RunConfig(
        problem=getattr(args, "problem", None),
        backend=args.backend,
        steps=args.steps,
        tol=args.tol,
        max_iter=args.max_iter,
        seed=args.seed,
        out=Path(args.out),
        mode=getattr(args, "mode", 1),
        paths=getattr(args, "paths", 10000),
    )


def _prepare(config: RunConfig):
    if config.problem is None:
        raise ProblemError("a problem file is required (--problem)")
    problem = load_problem(config.problem)
    grid = TimeGrid(config.steps, problem.horizon)
    backend = make_backend(config.backend, grid)
    return problem, backend


def _ensure_outdir(out: Path):
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ProblemError(f"cannot create output directory {out}: {exc}") from None


def _summary_payload(solution, config: RunConfig) -> dict:
    return {
        "backend": config.backend,
        "steps": config.steps,
        "tol": solution.trace.tol,
        "iterations": solution.trace.iterations,
        "converged": solution.trace.converged,
        "y0": {f"{side}_{mode}": solution.y0(side, mode) for side, mode in COMPONENTS},
    }


def cmd_solve(config: RunConfig) -> int:
    try:
        problem, backend = _prepare(config)
    except ProblemError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        solution, trace = solve_system(problem, backend, tol=config.tol, max_iter=config.max_iter)
    except SchemeError as exc:
        report = getattr(exc, "report", None)
        print(f"error: {exc}", file=sys.stderr)
        if report is not None:
            for line in report.lines():
                print(line, file=sys.stderr)
        return EXIT_INPUT

    try:
        _ensure_outdir(config.out)
    except ProblemError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    for side, mode in COMPONENTS:
        comp = solution.component(side, mode)
        write_surface_csv(config.out / f"Y_{side}_{mode}.csv", comp.y)
        write_surface_csv(config.out / f"Z_{side}_{mode}.csv", comp.z)
        write_surface_csv(config.out / f"K_{side}_{mode}.csv", comp.dk)
    write_trace_csv(config.out / "trace.csv", trace)
    write_json(config.out / "summary.json", _summary_payload(solution, config))
    if not trace.converged:
        print(
            f"did not converge within {config.max_iter} iterations "
            f"(last delta {trace.deltas[-1]:.3g})",
            file=sys.stderr,
        )
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def cmd_verify(config: RunConfig) -> int:
    try:
        _ensure_outdir(config.out)
    except ProblemError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        report = check_nonuniqueness(T=1.0, N=config.steps)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    write_json(config.out / "fixtures.json", report.as_dict())
    ok = report.report_family_1.passed and report.report_family_2.passed and report.distinct
    for name, rep in (("family 1", report.report_family_1), ("family 2", report.report_family_2)):
        status = "pass" if rep.passed else "FAIL"
        print(f"[{status}] {name}: max step residual {rep.max_over('max_step_residual'):.3g}")
        for failure in rep.failures():
            print(f"    {failure}")
    print(f"sup distance between families: {report.sup_distance:.6g}")
    return EXIT_OK if ok else EXIT_INPUT


def cmd_simulate(config: RunConfig) -> int:
    try:
        problem, backend = _prepare(config)
    except ProblemError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        solution, trace = solve_system(problem, backend, tol=config.tol, max_iter=config.max_iter)
    except SchemeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if not trace.converged:
        print("solver did not converge; no policy to simulate", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    try:
        _ensure_outdir(config.out)
    except ProblemError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    report = simulate_policy(solution, n_paths=config.paths, seed=config.seed, start_mode=config.mode)
    write_json(config.out / "strategy.json", report.as_dict())
    for side, leg in report.legs.items():
        print(
            f"{side} leg: action {leg.action} at mean step {leg.stop_step:g}, "
            f"realized {leg.realized:.6g} (gap {leg.value_gap:.3g})"
        )
    return EXIT_OK


def cmd_check(config: RunConfig) -> int:
    try:
        problem, backend = _prepare(config)
    except ProblemError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    report = validate_assumptions(problem, backend.grid)
    for line in report.lines():
        print(line)
    return EXIT_OK if report.all_passed else EXIT_INPUT


def _add_common(parser, needs_problem: bool):
    if needs_problem:
        parser.add_argument("--problem", required=True, help="problem definition file (JSON)")
    parser.add_argument("--backend", choices=("deterministic", "binomial"), default="deterministic")
    parser.add_argument("--steps", type=int, default=2000, help="number of time steps N")
    parser.add_argument("--tol", type=float, default=None, help="convergence tolerance (backend default)")
    parser.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER, dest="max_iter")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modeswitch",
        description="Two-modes switch/terminate valuation on the full balance sheet",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve the coupled system and write surfaces")
    _add_common(p_solve, needs_problem=True)

    p_verify = sub.add_parser("verify-fixtures", help="audit the closed-form fixtures")
    _add_common(p_verify, needs_problem=False)

    p_sim = sub.add_parser("simulate", help="solve, then replay the extracted policy")
    _add_common(p_sim, needs_problem=True)
    p_sim.add_argument("--mode", type=int, choices=(1, 2), default=1, help="starting mode")
    p_sim.add_argument("--paths", type=int, default=10000, help="Monte Carlo path count")

    p_check = sub.add_parser("check-assumptions", help="run the problem validator")
    _add_common(p_check, needs_problem=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _config_from_args(args)
    except ProblemError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    dispatch = {
        "solve": cmd_solve,
        "verify-fixtures": cmd_verify,
        "simulate": cmd_simulate,
        "check-assumptions": cmd_check,
    }
    return dispatch[args.command](config)


if __name__ == "__main__":
    sys.exit(main())
