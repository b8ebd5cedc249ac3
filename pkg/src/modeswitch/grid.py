"""Time grid, noise backends, and adapted surfaces.

Two backends share one interface: a deterministic backend (single node per
step, no noise) and a one-dimensional recombining binomial lattice where the
state moves by +-sqrt(dt) with probability 1/2 each, the standard weak-order-1
walk approximation of Brownian motion. Node j at step k carries state
x = (k - 2j) * sqrt(dt); an up move keeps j, a down move sends j to j+1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TimeGrid:
    n_steps: int
    horizon: float

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("need at least one time step")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.horizon, self.n_steps + 1)

    def t(self, k: int) -> float:
        return k * self.dt


class DeterministicBackend:
    """No-noise backend: one node per step, conditional expectation is the identity."""

    kind = "deterministic"

    def __init__(self, grid: TimeGrid):
        self.grid = grid

    def n_nodes(self, k: int) -> int:
        return 1

    def state(self, k: int) -> np.ndarray:
        return np.zeros(1)

    def _check(self, next_values, k):
        next_values = np.asarray(next_values, dtype=float)
        if next_values.shape != (self.n_nodes(k + 1),):
            raise ValueError(
                f"expected {self.n_nodes(k + 1)} node values at step {k + 1}, got shape {next_values.shape}"
            )
        return next_values

    def condexp(self, next_values, k: int) -> np.ndarray:
        return self._check(next_values, k).copy()

    def martingale_projection(self, next_values, k: int) -> np.ndarray:
        self._check(next_values, k)
        return np.zeros(1)

    def sample_paths(self, n_paths: int, seed: int) -> np.ndarray:
        if n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        return np.zeros((n_paths, self.grid.n_steps + 1), dtype=np.int64)


class BinomialBackend:
    """Recombining +-sqrt(dt) random walk lattice with fair-coin transitions."""

    kind = "binomial"

    def __init__(self, grid: TimeGrid):
        self.grid = grid
        self._sqrt_dt = np.sqrt(grid.dt)

    def n_nodes(self, k: int) -> int:
        return k + 1

    def state(self, k: int) -> np.ndarray:
        j = np.arange(k + 1)
        return (k - 2 * j) * self._sqrt_dt

    def _check(self, next_values, k):
        next_values = np.asarray(next_values, dtype=float)
        if next_values.shape != (self.n_nodes(k + 1),):
            raise ValueError(
                f"expected {self.n_nodes(k + 1)} node values at step {k + 1}, got shape {next_values.shape}"
            )
        return next_values

    def condexp(self, next_values, k: int) -> np.ndarray:
        v = self._check(next_values, k)
        return 0.5 * (v[:-1] + v[1:])

    def martingale_projection(self, next_values, k: int) -> np.ndarray:
        v = self._check(next_values, k)
        return (v[:-1] - v[1:]) / (2.0 * self._sqrt_dt)

    def sample_paths(self, n_paths: int, seed: int) -> np.ndarray:
        """Node-index paths, shape (n_paths, N+1); entry k is the node at step k."""
        if n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        rng = np.random.default_rng(seed)
        downs = rng.integers(0, 2, size=(n_paths, self.grid.n_steps), dtype=np.int64)
        paths = np.zeros((n_paths, self.grid.n_steps + 1), dtype=np.int64)
        np.cumsum(downs, axis=1, out=paths[:, 1:])
        return paths


Backend = DeterministicBackend | BinomialBackend


def make_backend(kind: str, grid: TimeGrid) -> Backend:
    if kind == "deterministic":
        return DeterministicBackend(grid)
    if kind == "binomial":
        return BinomialBackend(grid)
    raise ValueError(f"unknown backend kind {kind!r}")


class FieldSurface:
    """One adapted process sampled on the grid: an array of node values per step."""

    def __init__(self, backend: Backend, values: list[np.ndarray]):
        n = backend.grid.n_steps
        if len(values) != n + 1:
            raise ValueError(f"surface needs {n + 1} steps of values, got {len(values)}")
        vals = []
        for k, v in enumerate(values):
            v = np.asarray(v, dtype=float)
            if v.shape != (backend.n_nodes(k),):
                raise ValueError(f"step {k}: expected {backend.n_nodes(k)} nodes, got shape {v.shape}")
            vals.append(v)
        self.backend = backend
        self.values = vals

    @classmethod
    def zeros(cls, backend: Backend) -> "FieldSurface":
        return cls(backend, [np.zeros(backend.n_nodes(k)) for k in range(backend.grid.n_steps + 1)])

    @classmethod
    def constant(cls, backend: Backend, c: float) -> "FieldSurface":
        return cls(backend, [np.full(backend.n_nodes(k), float(c)) for k in range(backend.grid.n_steps + 1)])

    @classmethod
    def from_time_function(cls, backend: Backend, f) -> "FieldSurface":
        times = backend.grid.times
        return cls(backend, [np.full(backend.n_nodes(k), float(f(times[k]))) for k in range(backend.grid.n_steps + 1)])

    def at(self, k: int) -> np.ndarray:
        return self.values[k]

    @property
    def n_steps(self) -> int:
        return self.backend.grid.n_steps

    def copy(self) -> "FieldSurface":
        return FieldSurface(self.backend, [v.copy() for v in self.values])

    def sup_norm(self) -> float:
        return max(float(np.max(np.abs(v))) if v.size else 0.0 for v in self.values)

    def sup_diff(self, other: "FieldSurface") -> float:
        return max(float(np.max(np.abs(a - b))) for a, b in zip(self.values, other.values))

    def binop(self, other, op) -> "FieldSurface":
        if isinstance(other, FieldSurface):
            return FieldSurface(self.backend, [op(a, b) for a, b in zip(self.values, other.values)])
        return FieldSurface(self.backend, [op(a, other) for a in self.values])

    def __add__(self, other):
        return self.binop(other, np.add)

    def __sub__(self, other):
        return self.binop(other, np.subtract)

    def shift_by_time_function(self, f, sign: float = 1.0) -> "FieldSurface":
        """Surface plus sign * f(t_k) applied stepwise (cost shifts)."""
        times = self.backend.grid.times
        return FieldSurface(
            self.backend,
            [v + sign * float(f(times[k])) for k, v in enumerate(self.values)],
        )

    def along_path(self, path: np.ndarray) -> np.ndarray:
        """Values gathered along one node-index path (length N+1)."""
        return np.asarray([self.values[k][int(path[k])] for k in range(len(self.values))])
