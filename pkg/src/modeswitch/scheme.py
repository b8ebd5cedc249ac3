"""Monotone Picard iteration for the coupled four-equation system.

The iteration freezes the interconnected barriers at the previous stage and
solves four single reflected equations per sweep, warm-started from the
unreflected profit equations and an auxiliary minimum equation that seeds the
cost side from below. Comparison of the one-step operators makes every sweep
pointwise nondecreasing, so the limit is the minimal solution of the system.

Within a sweep the order is load-bearing: both cost components are solved
first (their barriers use only stage-n surfaces), then both profit components
(whose barriers mix the stage-n profit of the other mode with the *fresh*
stage-(n+1) cost of the same mode).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import Backend, FieldSurface
from .model import (
    COMPONENTS,
    MINUS,
    MODES,
    PLUS,
    SwitchingProblem,
    evaluate_obstacles,
    other_mode,
    validate_assumptions,
)
from .rbsde import RbsdeSolution, solve_bsde, solve_rbsde_lower, solve_rbsde_upper

# Pointwise slack for the scheme's order assertions (float noise only; the
# discrete comparison argument is exact in exact arithmetic).
MONOTONICITY_SLACK = 1e-10
SKOROKHOD_CAP = 1e-8

DEFAULT_TOL = {"deterministic": 1e-8, "binomial": 1e-4}
DEFAULT_MAX_ITER = 500


class SchemeError(RuntimeError):
    """An iteration invariant failed; signals a discretization or configuration bug."""


class _ShiftedDriver:
    """Profit driver rewritten for the benefit-shifted unknown l = y + b(t)."""

    def __init__(self, base, b_coeff):
        self.base = base
        self.b_coeff = b_coeff
        self.lipschitz = base.lipschitz

    def __call__(self, t, x, l, z):
        return self.base(t, x, l - self.b_coeff(t), z) - self.b_coeff.derivative(t)


class _MinDriver:
    """Pointwise minimum of several drivers (Lipschitz with the max constant)."""

    def __init__(self, drivers):
        self.drivers = list(drivers)
        self.lipschitz = max(d.lipschitz for d in self.drivers)

    def __call__(self, t, x, y, z):
        return np.minimum.reduce([d(t, x, y, z) for d in self.drivers])


@dataclass(frozen=True)
class SchemeStart:
    """Warm-start data: unreflected profit solutions, their benefit shifts, and
    the auxiliary minimum solution bounding the cost side from below."""

    y_plus0: dict
    big_l: dict
    dot_y: FieldSurface
    dot_z: FieldSurface
    alpha: _MinDriver


@dataclass(frozen=True)
class Iterate:
    n: int
    sol: dict

    def y(self, side: str, mode: int) -> FieldSurface:
        return self.sol[(side, mode)].y


@dataclass
class ConvergenceTrace:
    tol: float
    deltas: list = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.deltas)


@dataclass(frozen=True)
class BalanceSheetSolution:
    """Converged system solution: four (Y, Z, dK) triples plus metadata."""

    problem: SwitchingProblem
    backend: Backend
    sol: dict
    trace: ConvergenceTrace

    def y0(self, side: str, mode: int) -> float:
        return float(self.sol[(side, mode)].y.at(0)[0])

    def component(self, side: str, mode: int) -> RbsdeSolution:
        return self.sol[(side, mode)]

    def obstacles(self) -> dict:
        return system_obstacles(self.problem, {k: s.y for k, s in self.sol.items()}, self.backend)


def terminal_values(problem: SwitchingProblem, backend: Backend, side: str, mode: int) -> np.ndarray:
    x = backend.state(backend.grid.n_steps)
    return np.asarray(problem.terminal(side, mode)(x), dtype=float)


def system_obstacles(problem: SwitchingProblem, ys: dict, backend: Backend) -> dict:
    """Barrier surfaces implied by a set of four Y surfaces."""
    times = backend.grid.times
    per_key = {key: [] for key in COMPONENTS}
    for k in range(backend.grid.n_steps + 1):
        quad = evaluate_obstacles(
            {key: ys[key].at(k) for key in COMPONENTS}, problem.cost_slice(times[k])
        )
        for side, mode in COMPONENTS:
            per_key[(side, mode)].append(quad.get(side, mode))
    return {key: FieldSurface(backend, vals) for key, vals in per_key.items()}


def initialize_scheme(problem: SwitchingProblem, backend: Backend) -> SchemeStart:
    """Warm-start stage: unreflected profit equations and the minimum equation.

    Aborts with the validation report attached if the problem fails the
    admissibility checks.
    """
    report = validate_assumptions(problem, backend.grid)
    if not report.all_passed:
        msg = "; ".join(f"{c.name}" for c in report.failures())
        err = SchemeError(f"assumption validation failed: {msg}")
        err.report = report
        raise err

    y_plus0 = {}
    for mode in MODES:
        y, z = solve_bsde(problem.driver(PLUS, mode), terminal_values(problem, backend, PLUS, mode), backend)
        y_plus0[mode] = RbsdeSolution(y, z, FieldSurface.zeros(backend))

    big_l = {mode: y_plus0[mode].y.shift_by_time_function(problem.b[mode - 1]) for mode in MODES}

    shifted = [_ShiftedDriver(problem.driver(PLUS, mode), problem.b[mode - 1]) for mode in MODES]
    alpha = _MinDriver(shifted + [problem.driver(MINUS, mode) for mode in MODES])

    T = problem.horizon
    x_T = backend.state(backend.grid.n_steps)
    dot_terminal = np.minimum.reduce(
        [
            np.asarray(problem.terminal(PLUS, mode)(x_T), dtype=float) + problem.b[mode - 1](T)
            for mode in MODES
        ]
        + [terminal_values(problem, backend, MINUS, mode) for mode in MODES]
    )
    dot_y, dot_z = solve_bsde(alpha, dot_terminal, backend)

    # Lower-bound inequality seeding the cost side: dotY <= L^i and (with
    # ell > 0) dotY <= dotY + ell_i, at every node.
    for mode in MODES:
        bound = big_l[mode].binop(dot_y.shift_by_time_function(problem.ell[mode - 1]), np.minimum)
        gap = max(
            float(np.max(dot_y.at(k) - bound.at(k))) for k in range(backend.grid.n_steps + 1)
        )
        if gap > MONOTONICITY_SLACK:
            raise SchemeError(f"warm-start ordering violated for mode {mode}: excess {gap:g}")

    return SchemeStart(y_plus0=y_plus0, big_l=big_l, dot_y=dot_y, dot_z=dot_z, alpha=alpha)


def _check_not_below(new: FieldSurface, old: FieldSurface, label: str):
    drop = max(float(np.max(old.at(k) - new.at(k))) for k in range(new.n_steps + 1))
    if drop > MONOTONICITY_SLACK:
        raise SchemeError(f"iterate monotonicity violated for {label}: decrease {drop:g}")


def first_iterate(start: SchemeStart, problem: SwitchingProblem, backend: Backend) -> Iterate:
    """First reflected sweep, seeded by the warm-start surfaces.

    The cost components stop at the minimum solution's horizon value and are
    capped by (profit + benefit) and (minimum + switching cost); the profit
    components are then floored by the usual switch/terminate barrier built
    from the stage-0 profits and the fresh cost components.
    """
    n = backend.grid.n_steps
    sol = {}
    for mode in MODES:
        cap = start.big_l[mode].binop(
            start.dot_y.shift_by_time_function(problem.ell[mode - 1]), np.minimum
        )
        sol[(MINUS, mode)] = solve_rbsde_upper(
            problem.driver(MINUS, mode), start.dot_y.at(n), cap, backend
        )
        _check_not_below(sol[(MINUS, mode)].y, start.dot_y, f"cost mode {mode} vs warm start")
    for mode in MODES:
        j = other_mode(mode)
        floor = start.y_plus0[j].y.shift_by_time_function(problem.ell[mode - 1], sign=-1.0).binop(
            sol[(MINUS, mode)].y.shift_by_time_function(problem.a[mode - 1], sign=-1.0), np.maximum
        )
        sol[(PLUS, mode)] = solve_rbsde_lower(
            problem.driver(PLUS, mode), terminal_values(problem, backend, PLUS, mode), floor, backend
        )
        _check_not_below(sol[(PLUS, mode)].y, start.y_plus0[mode].y, f"profit mode {mode} stage 0->1")
    return Iterate(n=1, sol=sol)


def iterate_once(prev: Iterate, problem: SwitchingProblem, backend: Backend) -> Iterate:
    """One Picard sweep: cost pair (stage-n barriers), then profit pair
    (barriers mixing stage-n profit with stage-(n+1) cost)."""
    sol = {}
    for mode in MODES:
        j = other_mode(mode)
        cap = prev.y(MINUS, j).shift_by_time_function(problem.ell[mode - 1]).binop(
            prev.y(PLUS, mode).shift_by_time_function(problem.b[mode - 1]), np.minimum
        )
        sol[(MINUS, mode)] = solve_rbsde_upper(
            problem.driver(MINUS, mode), terminal_values(problem, backend, MINUS, mode), cap, backend
        )
        _check_not_below(sol[(MINUS, mode)].y, prev.y(MINUS, mode), f"cost mode {mode} stage {prev.n}")
    for mode in MODES:
        j = other_mode(mode)
        floor = prev.y(PLUS, j).shift_by_time_function(problem.ell[mode - 1], sign=-1.0).binop(
            sol[(MINUS, mode)].y.shift_by_time_function(problem.a[mode - 1], sign=-1.0), np.maximum
        )
        sol[(PLUS, mode)] = solve_rbsde_lower(
            problem.driver(PLUS, mode), terminal_values(problem, backend, PLUS, mode), floor, backend
        )
        _check_not_below(sol[(PLUS, mode)].y, prev.y(PLUS, mode), f"profit mode {mode} stage {prev.n}")
    return Iterate(n=prev.n + 1, sol=sol)


def _assert_system_constraints(solution: BalanceSheetSolution):
    """Barrier inequalities, increment signs, and complementarity sums on the
    converged surfaces (barriers recomputed self-consistently)."""
    obstacles = solution.obstacles()
    n = solution.backend.grid.n_steps
    for side, mode in COMPONENTS:
        comp = solution.sol[(side, mode)]
        s = obstacles[(side, mode)]
        sko = 0.0
        for k in range(n + 1):
            gap = comp.y.at(k) - s.at(k) if side == PLUS else s.at(k) - comp.y.at(k)
            if float(np.min(gap)) < -MONOTONICITY_SLACK:
                raise SchemeError(
                    f"barrier constraint violated for ({side},{mode}) at step {k}: {float(np.min(gap)):g}"
                )
            dk = comp.dk.at(k)
            if float(np.min(dk)) < -MONOTONICITY_SLACK:
                raise SchemeError(f"reflection increment negative for ({side},{mode}) at step {k}")
            sko += float(np.max(np.abs(gap) * dk))
        if sko > SKOROKHOD_CAP:
            raise SchemeError(f"complementarity sum {sko:g} exceeds {SKOROKHOD_CAP:g} for ({side},{mode})")


def solve_system(
    problem: SwitchingProblem,
    backend: Backend,
    tol: float | None = None,
    max_iter: int = DEFAULT_MAX_ITER,
) -> tuple[BalanceSheetSolution, ConvergenceTrace]:
    """Run the Picard iteration to the minimal system solution.

    Stops when the sup-distance across all four Y surfaces falls below
    ``tol`` (backend-dependent default) or after ``max_iter`` sweeps; a
    non-converged trace is returned to the caller rather than raised.
    """
    if tol is None:
        tol = DEFAULT_TOL[backend.kind]
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")

    start = initialize_scheme(problem, backend)
    current = first_iterate(start, problem, backend)
    trace = ConvergenceTrace(tol=tol)
    for _ in range(max_iter):
        nxt = iterate_once(current, problem, backend)
        delta = max(nxt.y(side, mode).sup_diff(current.y(side, mode)) for side, mode in COMPONENTS)
        trace.deltas.append(delta)
        current = nxt
        if delta < tol:
            trace.converged = True
            break

    solution = BalanceSheetSolution(problem=problem, backend=backend, sol=current.sol, trace=trace)
    if trace.converged:
        _assert_system_constraints(solution)
    return solution, trace
