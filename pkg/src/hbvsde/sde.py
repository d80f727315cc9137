"""Diagonal-noise SDE steppers and fixed-step integrators.

All state arrays carry the state dimension on the last axis, so the same
drift/diffusion callables and steppers work on a single state ``(dim,)`` and
on a batch of independent paths ``(paths, dim)``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import SimGrid

MAX_STORED_POINTS = 10_000_000

VecFn = Callable[[np.ndarray, float], np.ndarray]


class NonFiniteState(ArithmeticError):
    def __init__(self, step: int, path: int | None = None):
        self.step = step
        self.path = path
        where = f"step {step}" if path is None else f"step {step} of path {path}"
        super().__init__(f"non-finite state at {where}")


class Scheme(str, enum.Enum):
    EULER_MARUYAMA = "em"
    MILSTEIN = "milstein"
    RK4 = "rk4"
    EULER = "euler"


class NegativityPolicy(str, enum.Enum):
    RAW = "raw"
    PROJECT_TO_ZERO = "project"


@dataclass(frozen=True)
class SdeSystem:
    """``du = drift(u, t) dt + diag(diffusion_diag(u, t)) dW``.

    Parameters are closed over by the callables.  ``diffusion_diag_deriv``
    returns the diagonal partials d b_i / d u_i and is only needed by Milstein.
    """

    dim: int
    drift: VecFn
    diffusion_diag: VecFn
    diffusion_diag_deriv: VecFn | None = None
    name: str = ""


@dataclass
class Trajectory:
    grid: SimGrid
    times: np.ndarray
    states: np.ndarray
    scheme: Scheme
    negativity_events: list[tuple[int, int]] = field(default_factory=list)
    stride: int = 1

    def __post_init__(self):
        if self.states.shape[0] != self.times.shape[0]:
            raise ValueError("states and times disagree in length")

    def __len__(self):
        return self.states.shape[0]

    def component(self, i: int) -> np.ndarray:
        return self.states[:, i]


def _check_finite(out: np.ndarray, step: int = 0):
    if not np.all(np.isfinite(out)):
        raise NonFiniteState(step)
    return out


def em_step(state, t: float, dt: float, dW, system: SdeSystem) -> np.ndarray:
    state = np.asarray(state, dtype=float)
    out = state + system.drift(state, t) * dt + system.diffusion_diag(state, t) * dW
    return _check_finite(out)


def milstein_correction(state, t: float, dt: float, dW, system: SdeSystem) -> np.ndarray:
    """``0.5 * b_i * b_i' * (dW_i**2 - dt)`` per component."""
    if system.diffusion_diag_deriv is None:
        raise ValueError(f"system {system.name!r} has no diffusion derivative")
    b = system.diffusion_diag(state, t)
    return 0.5 * b * system.diffusion_diag_deriv(state, t) * (dW * dW - dt)


def milstein_step(state, t: float, dt: float, dW, system: SdeSystem) -> np.ndarray:
    state = np.asarray(state, dtype=float)
    em = state + system.drift(state, t) * dt + system.diffusion_diag(state, t) * dW
    out = em + milstein_correction(state, t, dt, dW, system)
    return _check_finite(out)


def euler_step(state, t: float, dt: float, rhs: VecFn) -> np.ndarray:
    state = np.asarray(state, dtype=float)
    return _check_finite(state + rhs(state, t) * dt)


def rk4_step(state, t: float, dt: float, rhs: VecFn) -> np.ndarray:
    state = np.asarray(state, dtype=float)
    k1 = rhs(state, t)
    k2 = rhs(state + 0.5 * dt * k1, t + 0.5 * dt)
    k3 = rhs(state + 0.5 * dt * k2, t + 0.5 * dt)
    k4 = rhs(state + dt * k3, t + dt)
    return _check_finite(state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))


def _auto_stride(n_steps: int, stride: int | None) -> int:
    if stride is not None:
        if stride < 1:
            raise ValueError("stride must be >= 1")
        return stride
    return max(1, math.ceil((n_steps + 1) / MAX_STORED_POINTS))


def _record_indices(n_steps: int, stride: int) -> np.ndarray:
    idx = np.arange(0, n_steps + 1, stride)
    if idx[-1] != n_steps:
        idx = np.append(idx, n_steps)
    return idx


def integrate_paths(
    system: SdeSystem,
    initial: np.ndarray,
    grid: SimGrid,
    increments: np.ndarray,
    scheme: Scheme | str = Scheme.EULER_MARUYAMA,
    policy: NegativityPolicy | str = NegativityPolicy.RAW,
    record: Sequence[int] | np.ndarray | None = None,
    path_offset: int = 0,
):
    """Integrate a batch of paths in lock-step.

    ``initial`` is ``(paths, dim)``, ``increments`` is ``(paths, n_steps, dim)``.
    Returns ``(states, events)`` where ``states`` has shape
    ``(paths, len(record), dim)`` and ``events`` is a list of
    ``(path, step, component)`` triples, sorted.
    """
    scheme = Scheme(scheme)
    policy = NegativityPolicy(policy)
    x = np.array(initial, dtype=float)
    if x.ndim != 2 or x.shape[1] != system.dim:
        raise ValueError(f"initial must have shape (paths, {system.dim})")
    n_paths = x.shape[0]
    if increments.shape != (n_paths, grid.n_steps, system.dim):
        raise ValueError(
            f"increments shape {increments.shape} does not match "
            f"({n_paths}, {grid.n_steps}, {system.dim})"
        )
    if not np.all(np.isfinite(x)):
        raise ValueError("initial state must be finite")
    if scheme is Scheme.MILSTEIN and system.diffusion_diag_deriv is None:
        raise ValueError(f"system {system.name!r} has no diffusion derivative")
    if scheme in (Scheme.RK4, Scheme.EULER):
        raise ValueError("deterministic schemes go through integrate_ode")

    record = np.arange(grid.n_steps + 1) if record is None else np.asarray(record, dtype=int)
    out = np.empty((n_paths, record.shape[0], system.dim))
    slot = {int(k): j for j, k in enumerate(record)}
    if 0 in slot:
        out[:, slot[0]] = x

    dt = grid.dt
    t0 = grid.t0
    drift, diff, deriv = system.drift, system.diffusion_diag, system.diffusion_diag_deriv
    milstein = scheme is Scheme.MILSTEIN
    project = policy is NegativityPolicy.PROJECT_TO_ZERO
    events: list[tuple[int, int, int]] = []
    was_neg = x < 0
    for i in range(grid.n_steps):
        t = t0 + i * dt
        dW = increments[:, i, :]
        b = diff(x, t)
        nxt = x + drift(x, t) * dt + b * dW
        if milstein:
            nxt = nxt + 0.5 * b * deriv(x, t) * (dW * dW - dt)
        if not np.all(np.isfinite(nxt)):
            bad = np.nonzero(~np.all(np.isfinite(nxt), axis=1))[0][0]
            raise NonFiniteState(i + 1, path_offset + int(bad))
        neg = nxt < 0
        if neg.any():
            fresh = neg & ~was_neg
            for p, c in zip(*np.nonzero(fresh)):
                events.append((path_offset + int(p), i + 1, int(c)))
            if project:
                nxt = np.where(neg, 0.0, nxt)
                neg = np.zeros_like(neg)
        was_neg = neg
        x = nxt
        j = slot.get(i + 1)
        if j is not None:
            out[:, j] = x
    events.sort()
    return out, events


def integrate(
    system: SdeSystem,
    initial,
    grid: SimGrid,
    increments: np.ndarray,
    scheme: Scheme | str = Scheme.EULER_MARUYAMA,
    policy: NegativityPolicy | str = NegativityPolicy.RAW,
    stride: int | None = None,
) -> Trajectory:
    """Integrate one path driven by an ``(n_steps, dim)`` increment matrix."""
    initial = np.asarray(initial, dtype=float).reshape(1, system.dim)
    increments = np.asarray(increments, dtype=float)
    if increments.shape != (grid.n_steps, system.dim):
        raise ValueError(f"increments must have shape ({grid.n_steps}, {system.dim})")
    stride = _auto_stride(grid.n_steps, stride)
    idx = _record_indices(grid.n_steps, stride)
    states, events = integrate_paths(
        system, initial, grid, increments[np.newaxis], scheme, policy, record=idx
    )
    return Trajectory(
        grid=grid,
        times=grid.t0 + idx * grid.dt,
        states=states[0],
        scheme=Scheme(scheme),
        negativity_events=[(s, c) for _, s, c in events],
        stride=stride,
    )


def integrate_ode(
    rhs: VecFn,
    initial,
    grid: SimGrid,
    method: Scheme | str = Scheme.RK4,
    stride: int | None = None,
) -> Trajectory:
    """Fixed-step deterministic integration (classical RK4 by default)."""
    method = Scheme(method)
    if method is Scheme.RK4:
        step = rk4_step
    elif method is Scheme.EULER:
        step = euler_step
    else:
        raise ValueError(f"{method.value} is not a deterministic scheme")
    x = np.asarray(initial, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("initial state must be finite")
    stride = _auto_stride(grid.n_steps, stride)
    idx = _record_indices(grid.n_steps, stride)
    out = np.empty((idx.shape[0],) + x.shape)
    out[0] = x
    j = 1
    dt = grid.dt
    for i in range(grid.n_steps):
        try:
            x = step(x, grid.t0 + i * dt, dt, rhs)
        except NonFiniteState:
            raise NonFiniteState(i + 1) from None
        if j < idx.shape[0] and idx[j] == i + 1:
            out[j] = x
            j += 1
    return Trajectory(
        grid=grid,
        times=grid.t0 + idx * dt,
        states=out,
        scheme=method,
        stride=stride,
    )


def gbm_system(a: float, b: float) -> SdeSystem:
    """Scalar geometric Brownian motion ``dx = a x dt + b x dW``."""
    return SdeSystem(
        dim=1,
        drift=lambda u, t: a * u,
        diffusion_diag=lambda u, t: b * u,
        diffusion_diag_deriv=lambda u, t: np.full_like(u, b),
        name="gbm",
    )


def gbm_exact(x0, a: float, b: float, t: float, w_t):
    return x0 * np.exp((a - 0.5 * b * b) * t + b * w_t)
