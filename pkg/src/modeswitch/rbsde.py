"""Single-equation backward solvers.

All solvers run the explicit backward Euler recursion: the integrand estimate
Z_k is the martingale-increment projection of Y_{k+1}, and the driver is
evaluated at (t_k, x_k, E_k[Y_{k+1}], Z_k), so no per-step fixed point is
needed. Reflection is applied by projection after the Euler step, which makes
the discrete complementarity condition exact by construction: the push amount
dK_k is nonzero only where the projected value sits on the barrier.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Backend, DeterministicBackend, FieldSurface

# Explicit scheme validity guard: dt * Lipschitz below this keeps the one-step
# operator a contraction in y.
STABILITY_LIMIT = 0.5

# Barrier-contact tolerance: contact is exact by construction at binding
# nodes (min/max return the barrier's value), so the tolerance only absorbs
# float noise downstream.
CONTACT_TOL = 1e-10


def hitting_tolerance(backend: Backend, scale: float = 1.0) -> float:
    """Contact tolerance for obstacle-hitting detection.

    Absolute 1e-10 on the deterministic backend; relative 1e-3 * sqrt(dt) on
    the lattice where surfaces carry state noise.
    """
    if isinstance(backend, DeterministicBackend):
        return CONTACT_TOL
    return 1e-3 * np.sqrt(backend.grid.dt) * max(1.0, abs(scale))


@dataclass(frozen=True)
class RbsdeSolution:
    """Solution triple of one (reflected) backward equation.

    ``dk`` holds the per-step reflection increments (dk at step N is zero);
    cumulative K is path-dependent on a recombining lattice, so
    :meth:`k_cumulative` returns the node-conditional mean E[K_{t_k} | X_{t_k}],
    which reduces to the exact pathwise prefix sum on the deterministic
    backend.
    """

    y: FieldSurface
    z: FieldSurface
    dk: FieldSurface

    @property
    def backend(self) -> Backend:
        return self.y.backend

    def k_cumulative(self) -> FieldSurface:
        backend = self.backend
        n = backend.grid.n_steps
        acc = [np.zeros(backend.n_nodes(k)) for k in range(n + 1)]
        for k in range(n):
            prev = acc[k] + self.dk.at(k)
            nxt = np.zeros(backend.n_nodes(k + 1))
            if backend.n_nodes(k + 1) == backend.n_nodes(k):
                nxt[:] = prev
            else:
                # Parent weights on the recombining walk: node j at step k+1 is
                # reached from up-parent j (weight (k+1-j)/(k+1), its path count
                # share) and down-parent j-1 (weight j/(k+1)).
                j = np.arange(k + 2)
                w_up = (k + 1 - j) / (k + 1)
                w_dn = j / (k + 1)
                padded = np.concatenate(([0.0], prev, [0.0]))
                nxt = w_up * padded[1:] + w_dn * padded[:-1]
            acc[k + 1] = nxt
        return FieldSurface(backend, acc)

    def k_total(self) -> float:
        """Expected terminal reflection mass E[K_T]."""
        return float(np.mean(self.k_cumulative().at(self.backend.grid.n_steps)))


def _check_stability(driver, backend: Backend):
    lip = getattr(driver, "lipschitz", None)
    if lip is not None and backend.grid.dt * lip >= STABILITY_LIMIT:
        raise ValueError(
            f"time step {backend.grid.dt:g} too coarse for Lipschitz constant {lip:g}; "
            f"need dt * L < {STABILITY_LIMIT}"
        )


def _terminal_array(terminal, backend: Backend) -> np.ndarray:
    n = backend.grid.n_steps
    term = np.asarray(terminal, dtype=float)
    if term.ndim == 0:
        term = np.full(backend.n_nodes(n), float(term))
    if term.shape != (backend.n_nodes(n),):
        raise ValueError(f"terminal values must have {backend.n_nodes(n)} nodes, got shape {term.shape}")
    return term.copy()


def solve_bsde(driver, terminal, backend: Backend) -> tuple[FieldSurface, FieldSurface]:
    """Plain backward equation: returns the (Y, Z) surfaces.

    ``driver`` is any callable (t, x, y, z) -> rate; an optional ``lipschitz``
    attribute activates the step-size validity guard.
    """
    _check_stability(driver, backend)
    n = backend.grid.n_steps
    dt = backend.grid.dt
    times = backend.grid.times
    y = [None] * (n + 1)
    z = [None] * (n + 1)
    y[n] = _terminal_array(terminal, backend)
    z[n] = np.zeros(backend.n_nodes(n))
    for k in range(n - 1, -1, -1):
        e = backend.condexp(y[k + 1], k)
        zk = backend.martingale_projection(y[k + 1], k)
        y[k] = e + driver(times[k], backend.state(k), e, zk) * dt
        z[k] = zk
    return FieldSurface(backend, y), FieldSurface(backend, z)


def _solve_reflected(driver, terminal, obstacle, backend: Backend, lower: bool) -> RbsdeSolution:
    _check_stability(driver, backend)
    n = backend.grid.n_steps
    dt = backend.grid.dt
    times = backend.grid.times
    term = _terminal_array(terminal, backend)
    if obstacle is not None:
        s_T = obstacle.at(n)
        if lower and np.any(s_T > term + CONTACT_TOL):
            raise ValueError("lower barrier exceeds the terminal value at the horizon")
        if not lower and np.any(s_T < term - CONTACT_TOL):
            raise ValueError("upper barrier below the terminal value at the horizon")
    y = [None] * (n + 1)
    z = [None] * (n + 1)
    dk = [None] * (n + 1)
    y[n] = term
    z[n] = np.zeros(backend.n_nodes(n))
    dk[n] = np.zeros(backend.n_nodes(n))
    for k in range(n - 1, -1, -1):
        e = backend.condexp(y[k + 1], k)
        zk = backend.martingale_projection(y[k + 1], k)
        ytilde = e + driver(times[k], backend.state(k), e, zk) * dt
        if obstacle is None:
            yk = ytilde
            push = np.zeros_like(ytilde)
        else:
            s = obstacle.at(k)
            if lower:
                yk = np.maximum(ytilde, s)
                push = yk - ytilde
            else:
                yk = np.minimum(ytilde, s)
                push = ytilde - yk
        # +-inf sentinels (barrier never binds) leave infinities in the push.
        push = np.where(np.isfinite(push), push, 0.0)
        y[k], z[k], dk[k] = yk, zk, push
    return RbsdeSolution(FieldSurface(backend, y), FieldSurface(backend, z), FieldSurface(backend, dk))


def solve_rbsde_lower(driver, terminal, obstacle, backend: Backend) -> RbsdeSolution:
    """Equation reflected upward off a lower barrier: Y >= obstacle, K pushes up.

    ``obstacle`` is a FieldSurface, or None / a -inf surface for the
    unconstrained case (then the result equals the plain equation with K = 0).
    """
    return _solve_reflected(driver, terminal, obstacle, backend, lower=True)


def solve_rbsde_upper(driver, terminal, obstacle, backend: Backend) -> RbsdeSolution:
    """Equation reflected downward off an upper barrier: Y <= obstacle, K pushes down."""
    return _solve_reflected(driver, terminal, obstacle, backend, lower=False)


def snell_envelope(payoff: FieldSurface, backend: Backend, contact_tol: float = CONTACT_TOL):
    """Smallest supermartingale dominating a payoff surface.

    Returns (envelope, contact) where ``contact`` marks nodes at which the
    envelope touches the payoff (within ``contact_tol``); stopping at the
    first contact at or after the current step is optimal.
    """
    n = backend.grid.n_steps
    env = [None] * (n + 1)
    contact = [None] * (n + 1)
    env[n] = payoff.at(n).copy()
    contact[n] = np.ones(backend.n_nodes(n), dtype=bool)
    for k in range(n - 1, -1, -1):
        cont = backend.condexp(env[k + 1], k)
        u = payoff.at(k)
        env[k] = np.maximum(u, cont)
        contact[k] = env[k] - u <= contact_tol
    return FieldSurface(backend, env), contact


def first_contact(contact, from_step: int, path=None) -> int:
    """First step index >= from_step at which contact holds, else N.

    On the deterministic backend ``path`` may be omitted; on the lattice the
    stopping time is a path object and a node-index path is required.
    """
    n = len(contact) - 1
    for k in range(from_step, n + 1):
        mask = contact[k]
        if path is None:
            if mask.shape != (1,):
                raise ValueError("a node-index path is required on the lattice backend")
            hit = bool(mask[0])
        else:
            hit = bool(mask[int(path[k])])
        if hit:
            return k
    return n
