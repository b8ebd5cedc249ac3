"""Problem files and result persistence.

The problem file is a declarative JSON document (schema in
docs/problem_schema.md): a horizon, four drivers, six cost coefficients, and
four terminal values. Surfaces are persisted as step/node/value CSV with
full-precision floats so that re-reading them reproduces audits exactly;
structured results (summary, strategy, fixture reports) are JSON with sorted
keys so repeated runs are byte-identical.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .grid import Backend, FieldSurface
from .model import (
    COMPONENTS,
    MINUS,
    PLUS,
    CoefficientFunction,
    Driver,
    ProblemError,
    SwitchingProblem,
    Terminal,
)

_SIDES = {PLUS: PLUS, MINUS: MINUS, "+": PLUS, "-": MINUS}


def _coefficient(spec, where: str) -> CoefficientFunction:
    if isinstance(spec, (int, float)):
        return CoefficientFunction.constant(float(spec))
    if not isinstance(spec, dict):
        raise ProblemError(f"{where}: expected a number or an object with 'kind'/'params'")
    try:
        kind = spec["kind"]
        params = spec["params"]
    except KeyError as missing:
        raise ProblemError(f"{where}: missing field {missing}") from None
    has_ito = bool(spec.get("ito", True))
    try:
        return CoefficientFunction(str(kind), tuple(float(p) for p in params), has_ito)
    except (TypeError, ValueError, ProblemError) as exc:
        raise ProblemError(f"{where}: {exc}") from None


def _terminal(spec, where: str) -> Terminal:
    if isinstance(spec, (int, float)):
        return Terminal(float(spec))
    if isinstance(spec, dict):
        try:
            return Terminal(float(spec["intercept"]), float(spec.get("slope", 0.0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ProblemError(f"{where}: {exc}") from None
    raise ProblemError(f"{where}: expected a number or an object with 'intercept'/'slope'")


def problem_from_dict(doc: dict) -> SwitchingProblem:
    if not isinstance(doc, dict):
        raise ProblemError("problem document must be a JSON object")
    try:
        horizon = float(doc["horizon"])
    except KeyError:
        raise ProblemError("missing field 'horizon'") from None
    except (TypeError, ValueError):
        raise ProblemError("'horizon' must be a number") from None

    raw_drivers = doc.get("drivers")
    if not isinstance(raw_drivers, list) or len(raw_drivers) != 4:
        raise ProblemError("'drivers' must be a list of four entries")
    drivers = {}
    for i, entry in enumerate(raw_drivers):
        where = f"drivers[{i}]"
        if not isinstance(entry, dict):
            raise ProblemError(f"{where}: expected an object")
        try:
            mode = int(entry["mode"])
            side = _SIDES[str(entry["side"])]
        except KeyError as missing:
            raise ProblemError(f"{where}: missing field {missing}") from None
        except (TypeError, ValueError):
            raise ProblemError(f"{where}: bad 'mode' or 'side'") from None
        drv = Driver(
            mode,
            side,
            _coefficient(entry.get("c0", 0.0), f"{where}.c0"),
            c1=float(entry.get("c1", 0.0)),
            c2=float(entry.get("c2", 0.0)),
            state_feature=str(entry.get("state_feature", "one")),
        )
        if (side, mode) in drivers:
            raise ProblemError(f"{where}: duplicate driver for ({side}, {mode})")
        drivers[(side, mode)] = drv
    for key in COMPONENTS:
        if key not in drivers:
            raise ProblemError(f"'drivers' missing entry for ({key[0]}, {key[1]})")

    raw_costs = doc.get("costs")
    if not isinstance(raw_costs, dict):
        raise ProblemError("'costs' must be an object with keys ell_1..b_2")
    cost = {}
    for name in ("ell_1", "ell_2", "a_1", "a_2", "b_1", "b_2"):
        if name not in raw_costs:
            raise ProblemError(f"'costs' missing entry {name!r}")
        cost[name] = _coefficient(raw_costs[name], f"costs.{name}")

    raw_terms = doc.get("terminals")
    if not isinstance(raw_terms, dict):
        raise ProblemError("'terminals' must be an object with keys plus_1..minus_2")
    terminals = {}
    for side, mode in COMPONENTS:
        name = f"{side}_{mode}"
        if name not in raw_terms:
            raise ProblemError(f"'terminals' missing entry {name!r}")
        terminals[(side, mode)] = _terminal(raw_terms[name], f"terminals.{name}")

    try:
        return SwitchingProblem(
            horizon=horizon,
            drivers=drivers,
            ell=(cost["ell_1"], cost["ell_2"]),
            a=(cost["a_1"], cost["a_2"]),
            b=(cost["b_1"], cost["b_2"]),
            terminals=terminals,
        )
    except ProblemError:
        raise
    except (TypeError, ValueError) as exc:
        raise ProblemError(str(exc)) from None


def load_problem(path) -> SwitchingProblem:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ProblemError(f"cannot read problem file {path}: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return problem_from_dict(doc)


def write_surface_csv(path, surface: FieldSurface):
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "node", "value"])
        for k in range(surface.n_steps + 1):
            for j, v in enumerate(surface.at(k)):
                writer.writerow([k, j, repr(float(v))])


def read_surface_csv(path, backend: Backend) -> FieldSurface:
    path = Path(path)
    values = [np.zeros(backend.n_nodes(k)) for k in range(backend.grid.n_steps + 1)]
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            values[int(row["step"])][int(row["node"])] = float(row["value"])
    return FieldSurface(backend, values)


def write_trace_csv(path, trace):
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "delta"])
        for i, delta in enumerate(trace.deltas, start=1):
            writer.writerow([i, repr(float(delta))])


def write_json(path, payload: dict):
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
