"""Fixture library and residual auditor.

Houses the closed-form non-uniqueness fixture (two exact solutions of the same
problem, one where the cost side carries the reflection mass and one where the
profit side does), and an auditor that recomputes every defining relation of
the system on a grid: per-step equation residuals, barrier inequalities,
complementarity sums, increment signs, and the empirical reflection density.

The auditor reports, it never judges; thresholds are evaluated separately so
the same numbers can back both CI gating and diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Backend, FieldSurface, TimeGrid, make_backend
from .model import (
    COMPONENTS,
    MINUS,
    PLUS,
    CoefficientFunction,
    Driver,
    SwitchingProblem,
    Terminal,
)
from .rbsde import RbsdeSolution
from .scheme import BalanceSheetSolution, system_obstacles

# Default step-residual threshold is RESIDUAL_RATE_SCALE * dt: ten times the
# largest curvature max|y''| among the closed-form fixtures at T=1 (the
# steeper family's mode-2 component, |y''| ~ 37.5). Grid-independent pass/fail.
RESIDUAL_RATE_SCALE = 375.0
CONSTRAINT_CAP = 1e-12
SKOROKHOD_CAP = 1e-10
K_SIGN_CAP = 1e-12
TERMINAL_CAP = 1e-9


def counterexample_problem(T: float = 1.0) -> SwitchingProblem:
    """The non-uniqueness fixture: unit terminals, switching cost exp(-4t),
    zero exit costs/benefits, and running rates y, y+ell, 2y, 2y+ell."""
    if T <= 0:
        raise ValueError("horizon must be positive")
    ell = CoefficientFunction.exponential(1.0, -4.0)
    zero = CoefficientFunction.constant(0.0)
    drivers = {
        (PLUS, 1): Driver(1, PLUS, zero, c1=1.0),
        (PLUS, 2): Driver(2, PLUS, ell, c1=1.0),
        (MINUS, 1): Driver(1, MINUS, zero, c1=2.0),
        (MINUS, 2): Driver(2, MINUS, ell, c1=2.0),
    }
    terminals = {key: Terminal(1.0) for key in COMPONENTS}
    return SwitchingProblem(
        horizon=float(T),
        drivers=drivers,
        ell=(ell, ell),
        a=(zero, zero),
        b=(zero, zero),
        terminals=terminals,
    )


@dataclass(frozen=True)
class ClosedFormFamily:
    """One of the two exact solutions of the fixture problem on [0, T].

    family 1: mode-1 value e^{T-t}, reflection mass on the cost side;
    family 2: mode-1 value e^{2(T-t)}, reflection mass on the profit side.
    Both have Z = 0 and horizon value 1 in every component. Values are
    evaluated from the analytic expressions, never tabulated.
    """

    family_id: int
    horizon: float

    def y(self, side: str, mode: int, t):
        t = np.asarray(t, dtype=float)
        T = self.horizon
        if self.family_id == 1:
            base = np.exp(T - t)
            if mode == 1:
                return base
            return base + (np.exp(-4.0 * t) - np.exp(-3.0 * T - t)) / 3.0
        base = np.exp(2.0 * (T - t))
        if mode == 1:
            return base
        return base + (np.exp(-4.0 * t) - np.exp(-2.0 * (T + t))) / 2.0

    def k_density(self, side: str, mode: int, t):
        t = np.asarray(t, dtype=float)
        reflected_side = MINUS if self.family_id == 1 else PLUS
        if side != reflected_side:
            return np.zeros_like(t)
        return self.y(side, mode, t)

    def z(self, side: str, mode: int, t):
        return np.zeros_like(np.asarray(t, dtype=float))

    def sample(self, backend: Backend) -> dict:
        """Grid sampling as four solution triples; increments use the
        trapezoid rule on the analytic reflection density."""
        grid = backend.grid
        times = grid.times
        dt = grid.dt
        out = {}
        for side, mode in COMPONENTS:
            yv = self.y(side, mode, times)
            dens = self.k_density(side, mode, times)
            ys, zs, dks = [], [], []
            for k in range(grid.n_steps + 1):
                nodes = backend.n_nodes(k)
                ys.append(np.full(nodes, yv[k]))
                zs.append(np.zeros(nodes))
                if k < grid.n_steps:
                    dks.append(np.full(nodes, 0.5 * (dens[k] + dens[k + 1]) * dt))
                else:
                    dks.append(np.zeros(nodes))
            out[(side, mode)] = RbsdeSolution(
                FieldSurface(backend, ys), FieldSurface(backend, zs), FieldSurface(backend, dks)
            )
        return out


def closed_form_family(family_id: int, T: float) -> ClosedFormFamily:
    if family_id not in (1, 2):
        raise ValueError("family_id must be 1 or 2")
    return ClosedFormFamily(family_id=family_id, horizon=float(T))


@dataclass(frozen=True)
class ComponentResiduals:
    max_step_residual: float
    max_constraint_violation: float
    skorokhod_sum: float
    k_sign_violation: float
    max_k_density: float
    terminal_mismatch: float

    def as_dict(self) -> dict:
        return {
            "max_step_residual": self.max_step_residual,
            "max_constraint_violation": self.max_constraint_violation,
            "skorokhod_sum": self.skorokhod_sum,
            "k_sign_violation": self.k_sign_violation,
            "max_k_density": self.max_k_density,
            "terminal_mismatch": self.terminal_mismatch,
        }


@dataclass
class ResidualReport:
    dt: float
    components: dict
    step_residual_cap: float

    def caps(self) -> dict:
        return {
            "max_step_residual": self.step_residual_cap,
            "max_constraint_violation": CONSTRAINT_CAP,
            "skorokhod_sum": SKOROKHOD_CAP,
            "k_sign_violation": K_SIGN_CAP,
            "terminal_mismatch": TERMINAL_CAP,
        }

    def failures(self) -> list[str]:
        out = []
        caps = self.caps()
        for key, res in self.components.items():
            for name, value in res.as_dict().items():
                cap = caps.get(name)
                if cap is not None and value > cap:
                    out.append(f"{key[0]}_{key[1]}.{name} = {value:.3g} > {cap:.3g}")
        return out

    @property
    def passed(self) -> bool:
        return not self.failures()

    def max_over(self, name: str) -> float:
        return max(getattr(res, name) for res in self.components.values())

    def as_dict(self) -> dict:
        return {
            "dt": self.dt,
            "threshold_note": (
                f"step residual cap = {RESIDUAL_RATE_SCALE:g} * dt "
                "(10x the largest closed-form curvature at T=1)"
            ),
            "caps": self.caps(),
            "components": {f"{s}_{m}": self.components[(s, m)].as_dict() for s, m in COMPONENTS},
            "passed": self.passed,
            "failures": self.failures(),
        }


def _as_solution_mapping(candidate) -> dict:
    if isinstance(candidate, BalanceSheetSolution):
        return candidate.sol
    if isinstance(candidate, dict):
        return candidate
    raise TypeError("candidate must be a BalanceSheetSolution or a component mapping")


def audit_solution(candidate, problem: SwitchingProblem, backend: Backend) -> ResidualReport:
    """Recompute the system's defining relations for a candidate solution.

    The per-step residual is measured per unit time with the running rate
    evaluated at (t_k, midpoint of Y_k and E_k[Y_{k+1}], Z_k); on the lattice
    the equation is audited in conditional expectation, which drops the
    martingale increment term.
    """
    sol = _as_solution_mapping(candidate)
    grid = backend.grid
    dt = grid.dt
    times = grid.times
    n = grid.n_steps
    ys = {key: sol[key].y for key in COMPONENTS}
    obstacles = system_obstacles(problem, ys, backend)

    components = {}
    for side, mode in COMPONENTS:
        comp = sol[(side, mode)]
        drv = problem.driver(side, mode)
        sign = -1.0 if side == PLUS else 1.0
        s = obstacles[(side, mode)]
        max_step = 0.0
        max_violation = 0.0
        sko = 0.0
        k_sign = 0.0
        max_density = 0.0
        for k in range(n):
            yk = comp.y.at(k)
            e = backend.condexp(comp.y.at(k + 1), k)
            zk = comp.z.at(k)
            dk = comp.dk.at(k)
            psi = drv(times[k], backend.state(k), 0.5 * (yk + e), zk)
            resid = (yk - e - psi * dt + sign * dk) / dt
            max_step = max(max_step, float(np.max(np.abs(resid))))
            gap = yk - s.at(k) if side == PLUS else s.at(k) - yk
            max_violation = max(max_violation, float(np.max(-gap)))
            sko += float(np.max(np.abs(gap) * dk))
            k_sign = max(k_sign, float(np.max(-dk)))
            max_density = max(max_density, float(np.max(dk)) / dt)
        gap_T = comp.y.at(n) - s.at(n) if side == PLUS else s.at(n) - comp.y.at(n)
        max_violation = max(max_violation, float(np.max(-gap_T)))
        xi = np.asarray(problem.terminal(side, mode)(backend.state(n)), dtype=float)
        terminal_mismatch = float(np.max(np.abs(comp.y.at(n) - xi)))
        components[(side, mode)] = ComponentResiduals(
            max_step_residual=max_step,
            max_constraint_violation=max(max_violation, 0.0),
            skorokhod_sum=sko,
            k_sign_violation=max(k_sign, 0.0),
            max_k_density=max_density,
            terminal_mismatch=terminal_mismatch,
        )
    return ResidualReport(dt=dt, components=components, step_residual_cap=RESIDUAL_RATE_SCALE * dt)


@dataclass
class NonUniquenessReport:
    horizon: float
    n_steps: int
    report_family_1: ResidualReport
    report_family_2: ResidualReport
    sup_distance: float
    family_1_below_family_2: bool

    @property
    def distinct(self) -> bool:
        """Both candidates pass while differing by far more than the observed
        numerical-error scale on this grid."""
        noise = max(
            self.report_family_1.max_over("max_step_residual") * self.horizon,
            self.report_family_2.max_over("max_step_residual") * self.horizon,
            SKOROKHOD_CAP,
        )
        return (
            self.report_family_1.passed
            and self.report_family_2.passed
            and self.sup_distance > 10.0 * noise
        )

    def as_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "n_steps": self.n_steps,
            "sup_distance": self.sup_distance,
            "family_1_below_family_2": self.family_1_below_family_2,
            "distinct_solutions": self.distinct,
            "family_1": self.report_family_1.as_dict(),
            "family_2": self.report_family_2.as_dict(),
        }


def check_nonuniqueness(T: float = 1.0, N: int = 2000) -> NonUniquenessReport:
    """Audit both closed-form solutions of the same problem on one grid.

    Two genuinely different exact solutions both passing every audited
    relation demonstrates that the system does not pin down its solution;
    the gap at t=0 grows like e^{2T} - e^{T}.
    """
    if T <= 0:
        raise ValueError("horizon must be positive")
    if N < 100:
        raise ValueError("need N >= 100 for meaningful residual caps")
    problem = counterexample_problem(T)
    backend = make_backend("deterministic", TimeGrid(N, T))
    fam1 = closed_form_family(1, T).sample(backend)
    fam2 = closed_form_family(2, T).sample(backend)
    rep1 = audit_solution(fam1, problem, backend)
    rep2 = audit_solution(fam2, problem, backend)
    sup = max(fam2[key].y.sup_diff(fam1[key].y) for key in COMPONENTS)
    below = all(
        all(
            float(np.max(fam1[key].y.at(k) - fam2[key].y.at(k))) <= 1e-12
            for k in range(backend.grid.n_steps + 1)
        )
        for key in COMPONENTS
    )
    return NonUniquenessReport(
        horizon=float(T),
        n_steps=int(N),
        report_family_1=rep1,
        report_family_2=rep2,
        sup_distance=sup,
        family_1_below_family_2=below,
    )
