"""The stochastic HBV infection model and its deterministic skeleton.

State ordering is ``(x, y, z)``: uninfected cells, infected cells, free virions.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ModelParams, NoiseParams, StateVec, validate_params
from .sde import SdeSystem

DEFAULT_INITIAL = StateVec(5.0, 1.0, 1.0)


@dataclass(frozen=True)
class HbvConfig:
    params: ModelParams = field(default_factory=ModelParams)
    noise: NoiseParams = field(default_factory=NoiseParams)
    initial: StateVec = DEFAULT_INITIAL

    def __post_init__(self):
        validate_params(self.params, self.noise)
        a = self.initial.as_array()
        # Zero y/z is admitted so the infection-free coupling case is expressible.
        if not np.all(np.isfinite(a)) or np.any(a < 0) or a[0] <= 0:
            raise ValueError(f"initial state must be nonnegative with x > 0, got {self.initial}")

    @property
    def strictly_positive(self) -> bool:
        return bool(np.all(self.initial.as_array() > 0))


@dataclass(frozen=True)
class Equilibria:
    infection_free: StateVec
    endemic: StateVec | None
    r0: float
    # r0 is not defined by the model's source; it is derived here from the
    # deterministic steady-state equations.
    r0_note: str = "derived threshold: (1-eta)(1-epsilon) beta p lam / (mu1 mu3 (mu2+q))"


def hbv_drift(state, params: ModelParams) -> np.ndarray:
    u = np.asarray(state, dtype=float)
    x, y, z = u[..., 0], u[..., 1], u[..., 2]
    infection = (1.0 - params.eta) * params.beta * x * z
    out = np.empty(np.broadcast(x, y, z).shape + (3,))
    out[..., 0] = params.lam - params.mu1 * x - infection + params.q * y
    out[..., 1] = infection - params.mu2 * y - params.q * y
    out[..., 2] = (1.0 - params.epsilon) * params.p * y - params.mu3 * z
    return out


def hbv_rhs(state, params: ModelParams) -> np.ndarray:
    """Right-hand side of the deterministic model (the drift with noise off)."""
    return hbv_drift(state, params)


def hbv_diffusion_diag(state, noise: NoiseParams) -> np.ndarray:
    return np.asarray(state, dtype=float) * noise.as_array()


def hbv_diffusion_deriv(state, noise: NoiseParams) -> np.ndarray:
    return np.broadcast_to(noise.as_array(), np.shape(state)).copy()


def hbv_system(params: ModelParams, noise: NoiseParams) -> SdeSystem:
    sig = noise.as_array()
    return SdeSystem(
        dim=3,
        drift=lambda u, t: hbv_drift(u, params),
        diffusion_diag=lambda u, t: u * sig,
        diffusion_diag_deriv=lambda u, t: np.broadcast_to(sig, np.shape(u)).copy(),
        name="hbv",
    )


def x1_system(params: ModelParams, noise: NoiseParams) -> SdeSystem:
    """``dx1 = (lam - mu1 x1) dt + sigma1 x1 dW1``, the infection-free x-equation."""
    lam, mu1, s1 = params.lam, params.mu1, noise.sigma1

    def drift(u, t):
        return lam - mu1 * u

    return SdeSystem(
        dim=1,
        drift=drift,
        diffusion_diag=lambda u, t: u * s1,
        diffusion_diag_deriv=lambda u, t: np.full_like(u, s1),
        name="x1",
    )


def x1_exact_mean(t, x1_0: float, params: ModelParams):
    """Closed-form ``E[x1(t)] = x1_0 e^{-mu1 t} + (lam/mu1)(1 - e^{-mu1 t})``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    decay = np.exp(-params.mu1 * t)
    out = x1_0 * decay + (params.lam / params.mu1) * (1.0 - decay)
    return float(out) if out.ndim == 0 else out


def reproduction_number(params: ModelParams) -> float:
    return (
        (1.0 - params.eta) * (1.0 - params.epsilon) * params.beta * params.p * params.lam
        / (params.mu1 * params.mu3 * (params.mu2 + params.q))
    )


def _residual_ok(state: np.ndarray, params: ModelParams, rtol: float = 1e-10) -> bool:
    r = hbv_rhs(state, params)
    scale = max(params.lam, params.mu1 * abs(state[0]), params.mu2 * abs(state[1]), params.mu3 * abs(state[2]), 1.0)
    return bool(np.max(np.abs(r)) <= rtol * scale)


def _endemic_by_bracketing(params: ModelParams) -> np.ndarray:
    # Along the curve x + y balance (y = (lam - mu1 x)/mu2, z = (1-eps) p y / mu3)
    # the y-equation reduces to y * g(x); bisect g on (0, lam/mu1).
    c = (1.0 - params.eta) * params.beta * (1.0 - params.epsilon) * params.p / params.mu3

    def g(x):
        return c * x - (params.mu2 + params.q)

    lo, hi = 0.0, params.lam / params.mu1
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid) < 0:
            lo = mid
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    y = (params.lam - params.mu1 * x) / params.mu2
    return np.array([x, y, (1.0 - params.epsilon) * params.p * y / params.mu3])


def equilibria(params: ModelParams) -> Equilibria:
    validate_params(params, NoiseParams(0.0, 0.0, 0.0))
    free = np.array([params.lam / params.mu1, 0.0, 0.0])
    r0 = reproduction_number(params)
    endemic = None
    if r0 > 1.0:
        x = (params.mu2 + params.q) * params.mu3 / (
            (1.0 - params.eta) * (1.0 - params.epsilon) * params.beta * params.p
        )
        y = (params.lam - params.mu1 * x) / params.mu2
        z = (1.0 - params.epsilon) * params.p * y / params.mu3
        cand = np.array([x, y, z])
        if not (np.all(np.isfinite(cand)) and _residual_ok(cand, params)):
            cand = _endemic_by_bracketing(params)
        if not _residual_ok(cand, params, rtol=1e-8):
            raise ArithmeticError(f"endemic equilibrium residual too large at {cand}")
        endemic = StateVec.from_array(cand)
    return Equilibria(StateVec.from_array(free), endemic, float(r0))


def operative_equilibrium(params: ModelParams) -> tuple[StateVec, str]:
    """Endemic equilibrium when it exists, else the infection-free one."""
    eq = equilibria(params)
    if eq.endemic is not None:
        return eq.endemic, "endemic"
    return eq.infection_free, "infection_free"


def default_gamma(params: ModelParams) -> float:
    return params.lam / params.mu1


__all__ = [
    "DEFAULT_INITIAL",
    "Equilibria",
    "HbvConfig",
    "default_gamma",
    "equilibria",
    "hbv_diffusion_deriv",
    "hbv_diffusion_diag",
    "hbv_drift",
    "hbv_rhs",
    "hbv_system",
    "operative_equilibrium",
    "reproduction_number",
    "x1_exact_mean",
    "x1_system",
]
