"""Problem data for the two-modes switch/terminate valuation.

A problem couples four running yields: an expected profit and an expected cost
per mode. Each yield may stop by switching to the other mode (paying the
switching cost ``ell``) or by terminating the project (paying ``a`` on the
profit side, receiving ``b`` on the cost side). The four value processes act
as each other's barriers; this module holds the static data and the barrier
algebra, plus the admissibility checks the solver relies on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

PLUS = "plus"
MINUS = "minus"
MODES = (1, 2)
COMPONENTS = ((PLUS, 1), (PLUS, 2), (MINUS, 1), (MINUS, 2))

# Absolute slack when comparing terminal inequalities; absorbs float
# evaluation of the exponential cost catalog.
BOUNDARY_SLACK = 1e-12


def other_mode(mode: int) -> int:
    return 3 - mode


class ProblemError(ValueError):
    """Raised for malformed or inadmissible problem data."""


@dataclass(frozen=True)
class CoefficientFunction:
    """Deterministic C^1 time coefficient from a small catalog.

    kinds:
      constant     params = (c,)          value c
      exponential  params = (c, gamma)    value c * exp(gamma * t)
      polynomial   params = (c0, c1, ..)  value sum c_k t^k

    Deterministic C^1 functions are trivially of Ito type with zero diffusion
    part; ``has_ito_data`` records whether the drift (time derivative) may be
    used, so that missing-Ito-data configurations are representable and
    detectable by the validator.
    """

    kind: str
    params: tuple[float, ...]
    has_ito_data: bool = True

    def __post_init__(self):
        if self.kind not in ("constant", "exponential", "polynomial"):
            raise ProblemError(f"unknown coefficient kind {self.kind!r}")
        if self.kind == "constant" and len(self.params) != 1:
            raise ProblemError("constant coefficient takes one parameter")
        if self.kind == "exponential" and len(self.params) != 2:
            raise ProblemError("exponential coefficient takes (level, rate)")
        if self.kind == "polynomial" and len(self.params) < 1:
            raise ProblemError("polynomial coefficient needs coefficients")

    @classmethod
    def constant(cls, c: float, has_ito_data: bool = True) -> "CoefficientFunction":
        return cls("constant", (float(c),), has_ito_data)

    @classmethod
    def exponential(cls, level: float, rate: float, has_ito_data: bool = True) -> "CoefficientFunction":
        return cls("exponential", (float(level), float(rate)), has_ito_data)

    @classmethod
    def polynomial(cls, coeffs, has_ito_data: bool = True) -> "CoefficientFunction":
        return cls("polynomial", tuple(float(c) for c in coeffs), has_ito_data)

    def __call__(self, t):
        if self.kind == "constant":
            return self.params[0] * np.ones_like(np.asarray(t, dtype=float)) if np.ndim(t) else self.params[0]
        if self.kind == "exponential":
            c, gamma = self.params
            return c * np.exp(gamma * np.asarray(t, dtype=float)) if np.ndim(t) else c * np.exp(gamma * t)
        return np.polynomial.polynomial.polyval(np.asarray(t, dtype=float), self.params)

    def derivative(self, t):
        """Time derivative (the Ito drift U; the diffusion part is zero)."""
        if not self.has_ito_data:
            raise ProblemError(f"coefficient {self.kind!r} declared without Ito data")
        if self.kind == "constant":
            return np.zeros_like(np.asarray(t, dtype=float)) if np.ndim(t) else 0.0
        if self.kind == "exponential":
            c, gamma = self.params
            return c * gamma * np.exp(gamma * np.asarray(t, dtype=float)) if np.ndim(t) else c * gamma * np.exp(gamma * t)
        dcoeffs = tuple(k * c for k, c in enumerate(self.params))[1:] or (0.0,)
        return np.polynomial.polynomial.polyval(np.asarray(t, dtype=float), dcoeffs)


@dataclass(frozen=True)
class Driver:
    """Affine running yield rate psi(t, x, y, z) = c0(t)*feat(x) + c1*y + c2*z.

    ``state_feature`` is "one" (c0 purely time-dependent) or "x" (c0 scaled by
    the lattice state). The affine catalog makes the Lipschitz requirement
    hold by construction with constant |c1| + |c2|.
    """

    mode: int
    side: str
    c0: CoefficientFunction
    c1: float = 0.0
    c2: float = 0.0
    state_feature: str = "one"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ProblemError(f"driver mode must be 1 or 2, got {self.mode}")
        if self.side not in (PLUS, MINUS):
            raise ProblemError(f"driver side must be '{PLUS}' or '{MINUS}'")
        if self.state_feature not in ("one", "x"):
            raise ProblemError("state_feature must be 'one' or 'x'")

    @property
    def lipschitz(self) -> float:
        return abs(self.c1) + abs(self.c2)

    def __call__(self, t, x, y, z):
        base = self.c0(t)
        if self.state_feature == "x":
            base = base * x
        return base + self.c1 * y + self.c2 * z


@dataclass(frozen=True)
class Terminal:
    """Horizon value xi(x) = intercept + slope * x.

    Constant terminals (slope 0) are the deterministic-backend case; the
    lattice backend may use the state-affine form.
    """

    intercept: float
    slope: float = 0.0

    def __call__(self, x):
        return self.intercept + self.slope * np.asarray(x, dtype=float)

    @classmethod
    def of(cls, value) -> "Terminal":
        if isinstance(value, Terminal):
            return value
        return cls(float(value))


@dataclass(frozen=True)
class SwitchingProblem:
    """Full data of one two-modes balance-sheet switching problem."""

    horizon: float
    drivers: Mapping[tuple[str, int], Driver]
    ell: tuple[CoefficientFunction, CoefficientFunction]
    a: tuple[CoefficientFunction, CoefficientFunction]
    b: tuple[CoefficientFunction, CoefficientFunction]
    terminals: Mapping[tuple[str, int], Terminal]

    def __post_init__(self):
        if self.horizon <= 0:
            raise ProblemError("horizon must be positive")
        for key in COMPONENTS:
            if key not in self.drivers:
                raise ProblemError(f"missing driver for component {key}")
            if key not in self.terminals:
                raise ProblemError(f"missing terminal for component {key}")
        for name, pair in (("ell", self.ell), ("a", self.a), ("b", self.b)):
            if len(pair) != 2:
                raise ProblemError(f"cost family {name!r} needs one entry per mode")

    def driver(self, side: str, mode: int) -> Driver:
        return self.drivers[(side, mode)]

    def terminal(self, side: str, mode: int) -> Terminal:
        return self.terminals[(side, mode)]

    def cost_slice(self, t) -> "CostSlice":
        return CostSlice(
            ell=(self.ell[0](t), self.ell[1](t)),
            a=(self.a[0](t), self.a[1](t)),
            b=(self.b[0](t), self.b[1](t)),
        )


@dataclass(frozen=True)
class CostSlice:
    """The six cost values at one time."""

    ell: tuple[float, float]
    a: tuple[float, float]
    b: tuple[float, float]


@dataclass(frozen=True)
class ObstacleQuadruple:
    """The four barrier values built from one set of yield values."""

    s_plus_1: object
    s_plus_2: object
    s_minus_1: object
    s_minus_2: object

    def get(self, side: str, mode: int):
        return getattr(self, f"s_{side}_{mode}")


def evaluate_obstacles(y: Mapping[tuple[str, int], object], costs: CostSlice) -> ObstacleQuadruple:
    """Barrier values from the four yields and the six costs at one time.

    Profit in mode i is held up by the better of switching (other mode's
    profit minus ell_i) and terminating (own cost minus a_i). Cost in mode i
    is pressed down by the cheaper of switching (other mode's cost plus
    ell_i) and terminating (own profit plus b_i). Pure function; scalar or
    array valued.
    """
    yp1, yp2 = y[(PLUS, 1)], y[(PLUS, 2)]
    ym1, ym2 = y[(MINUS, 1)], y[(MINUS, 2)]
    ell1, ell2 = costs.ell
    a1, a2 = costs.a
    b1, b2 = costs.b
    return ObstacleQuadruple(
        s_plus_1=np.maximum(yp2 - ell1, ym1 - a1),
        s_plus_2=np.maximum(yp1 - ell2, ym2 - a2),
        s_minus_1=np.minimum(ym2 + ell1, yp1 + b1),
        s_minus_2=np.minimum(ym1 + ell2, yp2 + b2),
    )


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""
    at_time: float | None = None
    value: float | None = None


@dataclass
class ValidationReport:
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def add(self, name, passed, detail="", at_time=None, value=None):
        self.checks.append(CheckResult(name, bool(passed), detail, at_time, value))

    def lines(self) -> list[str]:
        out = []
        for c in self.checks:
            status = "pass" if c.passed else "FAIL"
            loc = f" at t={c.at_time:g}" if c.at_time is not None else ""
            val = f" (value {c.value:g})" if c.value is not None else ""
            out.append(f"[{status}] {c.name}{loc}{val}: {c.detail}" if c.detail else f"[{status}] {c.name}{loc}{val}")
        return out


def _first_violation(times, values, ok_mask):
    bad = np.nonzero(~ok_mask)[0]
    if bad.size == 0:
        return None, None
    i = int(bad[0])
    return float(times[i]), float(values[i])


def validate_assumptions(problem: SwitchingProblem, grid) -> ValidationReport:
    """Check the admissibility of a problem on a given time grid.

    Covers: Lipschitz/integrability of the four drivers, positivity of the
    switching costs, square-integrable terminals with the four boundary
    inequalities at the horizon, and availability of Ito data (closed-form
    drift) for the ``b`` and ``ell`` cost processes. Reports every check;
    never raises.
    """
    report = ValidationReport()
    times = np.asarray(grid.times, dtype=float)
    T = float(problem.horizon)

    for side, mode in COMPONENTS:
        drv = problem.driver(side, mode)
        name = f"A1 driver psi_{side}_{mode}"
        c0_vals = np.asarray([drv.c0(t) for t in times], dtype=float)
        finite = np.isfinite(c0_vals) & np.isfinite(drv.lipschitz)
        t_bad, v_bad = _first_violation(times, c0_vals, finite)
        report.add(
            name,
            t_bad is None,
            f"Lipschitz constant {drv.lipschitz:g}; psi(.,0,0) finite on grid",
            at_time=t_bad,
            value=v_bad,
        )

    for i, mode in enumerate(MODES):
        ell_vals = np.asarray([problem.ell[i](t) for t in times], dtype=float)
        ok = np.isfinite(ell_vals) & (ell_vals > 0.0)
        t_bad, v_bad = _first_violation(times, ell_vals, ok)
        report.add(
            f"A2 switching cost ell_{mode} > 0",
            t_bad is None,
            "strictly positive at every grid time",
            at_time=t_bad,
            value=v_bad,
        )
        for fam_name, fam in (("a", problem.a), ("b", problem.b)):
            vals = np.asarray([fam[i](t) for t in times], dtype=float)
            ok = np.isfinite(vals)
            t_bad, v_bad = _first_violation(times, vals, ok)
            report.add(f"A2 cost {fam_name}_{mode} finite", t_bad is None, at_time=t_bad, value=v_bad)

    # Terminal inequalities at the horizon. With state-dependent terminals the
    # inequalities must hold at every terminal node of the backend's support;
    # the validator checks them on the model data itself at the grid horizon
    # (backend-specific node values are checked by the solver preconditions).
    xi = {key: problem.terminal(*key) for key in COMPONENTS}
    x_probe = np.asarray([0.0])
    xi_val = {key: float(np.asarray(xi[key](x_probe))[0]) for key in COMPONENTS}
    for key in COMPONENTS:
        report.add(
            f"A3 terminal xi_{key[0]}_{key[1]} square integrable",
            np.isfinite(xi_val[key]),
            value=xi_val[key],
        )
    costs_T = problem.cost_slice(T)
    bc = evaluate_obstacles({k: xi_val[k] for k in COMPONENTS}, costs_T)
    bc_checks = (
        ("BC terminal xi_plus_1", xi_val[(PLUS, 1)] - bc.s_plus_1),
        ("BC terminal xi_plus_2", xi_val[(PLUS, 2)] - bc.s_plus_2),
        ("BC terminal xi_minus_1", bc.s_minus_1 - xi_val[(MINUS, 1)]),
        ("BC terminal xi_minus_2", bc.s_minus_2 - xi_val[(MINUS, 2)]),
    )
    for name, margin in bc_checks:
        report.add(name, margin >= -BOUNDARY_SLACK, f"margin {float(margin):.3g}", at_time=T, value=float(margin))

    for i, mode in enumerate(MODES):
        report.add(
            f"A4 Ito data for b_{mode}",
            problem.b[i].has_ito_data,
            "closed-form drift available (deterministic catalog, zero diffusion)",
        )
        report.add(
            f"A4 Ito data for ell_{mode}",
            problem.ell[i].has_ito_data,
            "closed-form drift available (deterministic catalog, zero diffusion)",
        )
    return report
