"""Two-modes switch/terminate valuation on the full balance sheet.

Solves the coupled system of four reflected backward equations in which the
expected profit and expected cost of each operating mode act as each other's
barriers (switch to the other mode or terminate, on either side of the
balance sheet), by a monotone Picard iteration converging to the minimal
solution. Ships a closed-form non-uniqueness fixture, a residual auditor,
stopping-rule extraction with forward policy replay, and a CLI.
"""

from .grid import BinomialBackend, DeterministicBackend, FieldSurface, TimeGrid, make_backend
from .model import (
    COMPONENTS,
    MINUS,
    PLUS,
    CoefficientFunction,
    Driver,
    ObstacleQuadruple,
    ProblemError,
    SwitchingProblem,
    Terminal,
    evaluate_obstacles,
    validate_assumptions,
)
from .rbsde import (
    RbsdeSolution,
    first_contact,
    snell_envelope,
    solve_bsde,
    solve_rbsde_lower,
    solve_rbsde_upper,
)
from .scheme import (
    BalanceSheetSolution,
    ConvergenceTrace,
    Iterate,
    SchemeError,
    first_iterate,
    initialize_scheme,
    iterate_once,
    solve_system,
)
from .strategy import StrategyReport, classify_action, extract_stopping_times, simulate_policy
from .verify import (
    ClosedFormFamily,
    ResidualReport,
    audit_solution,
    check_nonuniqueness,
    closed_form_family,
    counterexample_problem,
)

__version__ = "0.1.0"

__all__ = [
    "BalanceSheetSolution",
    "BinomialBackend",
    "COMPONENTS",
    "ClosedFormFamily",
    "CoefficientFunction",
    "ConvergenceTrace",
    "DeterministicBackend",
    "Driver",
    "FieldSurface",
    "Iterate",
    "MINUS",
    "ObstacleQuadruple",
    "PLUS",
    "ProblemError",
    "RbsdeSolution",
    "ResidualReport",
    "SchemeError",
    "StrategyReport",
    "SwitchingProblem",
    "Terminal",
    "TimeGrid",
    "audit_solution",
    "check_nonuniqueness",
    "classify_action",
    "closed_form_family",
    "counterexample_problem",
    "evaluate_obstacles",
    "extract_stopping_times",
    "first_contact",
    "first_iterate",
    "initialize_scheme",
    "iterate_once",
    "make_backend",
    "simulate_policy",
    "snell_envelope",
    "solve_bsde",
    "solve_rbsde_lower",
    "solve_rbsde_upper",
    "solve_system",
    "validate_assumptions",
]
