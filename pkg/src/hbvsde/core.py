"""Domain types, parameter validation, seeding and Wiener increments.

Random streams
--------------
Every simulated path owns its own stream, keyed by ``(master_seed, path_index)``.
The key is turned into a PCG64 state with a fixed SplitMix64 avalanche::

    mix(z):
        z = (z + 0x9E3779B97F4A7C15)            mod 2**64
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 mod 2**64
        z = (z ^ (z >> 27)) * 0x94D049BB133111EB mod 2**64
        return z ^ (z >> 31)

    key   = mix(mix(master_seed) ^ path_index)
    state = mix(key) << 64 | mix(key ^ 0x5851F42D4C957F2D)
    inc   = (mix(key ^ 0x14057B7EF767814F) << 64 | mix(key ^ 0xDA3E39CB94B95BDB)) | 1

``mix`` is a bijection on 64-bit integers, so distinct path indices under one
master seed always give distinct keys.  The PCG64 state is set directly (no
SeedSequence involved).

Normals come from the Box-Muller transform applied to consecutive pairs of raw
64-bit outputs ``(r1, r2)``::

    u1 = ((r1 >> 11) + 0.5) * 2**-53        # in (0, 1), never 0
    u2 = ((r2 >> 11) + 0.5) * 2**-53
    rad = sqrt(-2 ln u1)
    n[2k], n[2k+1] = rad * cos(2 pi u2), rad * sin(2 pi u2)

A request for ``n`` normals consumes ``2 * ceil(n / 2)`` raw outputs; an odd
trailing value is discarded.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_STATE_SALT = 0x5851F42D4C957F2D
_INC_SALT_HI = 0x14057B7EF767814F
_INC_SALT_LO = 0xDA3E39CB94B95BDB
_TWO_M53 = 2.0 ** -53


class ParameterError(ValueError):
    """Base for parameter validation failures."""


class NonPositiveRate(ParameterError):
    def __init__(self, field: str, value: float):
        self.field = field
        self.value = value
        super().__init__(f"{field} must be strictly positive (got {value!r})")


class FractionOutOfRange(ParameterError):
    def __init__(self, field: str, value: float):
        self.field = field
        self.value = value
        super().__init__(f"{field} must lie in [0, 1] (got {value!r})")


class NegativeNoise(ParameterError):
    def __init__(self, field: str, value: float):
        self.field = field
        self.value = value
        super().__init__(f"{field} must be nonnegative (got {value!r})")


class InvalidParameters(ParameterError):
    """Raised by :func:`validate_params`; carries every individual violation."""

    def __init__(self, errors: list[ParameterError]):
        self.errors = errors
        super().__init__("; ".join(str(e) for e in errors))

    @property
    def fields(self) -> list[str]:
        return [e.field for e in self.errors]


class IndivisibleGrid(ValueError):
    pass


@dataclass(frozen=True)
class ModelParams:
    """Rates of the deterministic HBV model.

    ``lam`` is the production rate of uninfected cells.  The same quantity is
    written with both a capital and a lower-case lambda in the literature; here
    there is one field.
    """

    lam: float = 100.0
    mu1: float = 20.0
    mu2: float = 5.0
    mu3: float = 7.0
    beta: float = 0.6
    eta: float = 0.6
    epsilon: float = 0.2
    p: float = 2.0
    q: float = 5.0

    def as_dict(self) -> dict[str, float]:
        return {f.name: float(getattr(self, f.name)) for f in fields(self)}


@dataclass(frozen=True)
class NoiseParams:
    sigma1: float = 0.5
    sigma2: float = 0.6
    sigma3: float = 0.8

    def as_array(self) -> np.ndarray:
        return np.array([self.sigma1, self.sigma2, self.sigma3], dtype=float)

    def as_dict(self) -> dict[str, float]:
        return {f.name: float(getattr(self, f.name)) for f in fields(self)}

    @property
    def is_zero(self) -> bool:
        return self.sigma1 == 0.0 and self.sigma2 == 0.0 and self.sigma3 == 0.0


@dataclass(frozen=True)
class StateVec:
    x: float
    y: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    @classmethod
    def from_array(cls, a) -> "StateVec":
        return cls(float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True)
class SimGrid:
    t0: float
    t_end: float
    n_steps: int

    def __post_init__(self):
        if not isinstance(self.n_steps, (int, np.integer)) or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer (got {self.n_steps!r})")
        if not self.t_end > self.t0:
            raise ValueError(f"t_end must exceed t0 (got t0={self.t0}, t_end={self.t_end})")

    @classmethod
    def from_dt(cls, t_end: float, dt: float, t0: float = 0.0) -> "SimGrid":
        n = round((t_end - t0) / dt)
        if n < 1 or not math.isclose(n * dt, t_end - t0, rel_tol=1e-9):
            raise ValueError(f"dt={dt} does not divide [{t0}, {t_end}] into whole steps")
        return cls(t0, t_end, int(n))

    @property
    def dt(self) -> float:
        return (self.t_end - self.t0) / self.n_steps

    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.n_steps + 1) * self.dt

    def index_of(self, t: float) -> int:
        i = round((t - self.t0) / self.dt)
        if not 0 <= i <= self.n_steps or not math.isclose(self.t0 + i * self.dt, t, rel_tol=1e-9, abs_tol=1e-12):
            raise ValueError(f"time {t} is not a grid point")
        return int(i)


@dataclass(frozen=True)
class RunSeed:
    master_seed: int
    path_index: int = 0

    def __post_init__(self):
        if not 0 <= self.master_seed <= MASK64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if self.path_index < 0:
            raise ValueError("path_index must be nonnegative")


@dataclass(frozen=True)
class ValidatedParams:
    model: ModelParams
    noise: NoiseParams


def validate_params(mp: ModelParams, noise: NoiseParams) -> ValidatedParams:
    errors: list[ParameterError] = []
    for name in ("lam", "mu1", "mu2", "mu3", "beta", "p", "q"):
        v = getattr(mp, name)
        if not (math.isfinite(v) and v > 0):
            errors.append(NonPositiveRate(name, v))
    for name in ("eta", "epsilon"):
        v = getattr(mp, name)
        if not (0.0 <= v <= 1.0):
            errors.append(FractionOutOfRange(name, v))
    for name in ("sigma1", "sigma2", "sigma3"):
        v = getattr(noise, name)
        if not (math.isfinite(v) and v >= 0):
            errors.append(NegativeNoise(name, v))
    if errors:
        raise InvalidParameters(errors)
    return ValidatedParams(mp, noise)


def mix64(z: int) -> int:
    z = (z + _GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def stream_key(master_seed: int, path_index: int) -> int:
    return mix64(mix64(master_seed & MASK64) ^ (path_index & MASK64))


class RandomStream:
    """A per-path source of uniforms and standard normals (see module docstring)."""

    def __init__(self, key: int):
        bg = np.random.PCG64()
        state = (mix64(key) << 64) | mix64(key ^ _STATE_SALT)
        inc = ((mix64(key ^ _INC_SALT_HI) << 64) | mix64(key ^ _INC_SALT_LO)) | 1
        bg.state = {
            "bit_generator": "PCG64",
            "state": {"state": state, "inc": inc},
            "has_uint32": 0,
            "uinteger": 0,
        }
        self._bg = bg

    def raw(self, n: int) -> np.ndarray:
        return self._bg.random_raw(n)

    def uniforms(self, n: int) -> np.ndarray:
        """Open-interval uniforms, 53 bits each."""
        return ((self.raw(n) >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_M53

    def normals(self, n: int) -> np.ndarray:
        m = (n + 1) // 2
        u = self.uniforms(2 * m)
        rad = np.sqrt(-2.0 * np.log(u[0::2]))
        ang = (2.0 * np.pi) * u[1::2]
        out = np.empty(2 * m)
        out[0::2] = rad * np.cos(ang)
        out[1::2] = rad * np.sin(ang)
        return out[:n]


def derive_stream(seed: RunSeed) -> RandomStream:
    return RandomStream(stream_key(seed.master_seed, seed.path_index))


def sample_wiener_increments(grid: SimGrid, stream: RandomStream, dims: int) -> np.ndarray:
    """Return an ``(n_steps, dims)`` Fortran-ordered matrix of N(0, dt) draws.

    Draws fill column 0 first, then column 1, and so on, so the first column
    is the same whatever ``dims`` is.  Coupled experiments rely on that.
    """
    if dims < 1:
        raise ValueError("dims must be >= 1")
    z = stream.normals(grid.n_steps * dims)
    return (z * math.sqrt(grid.dt)).reshape((grid.n_steps, dims), order="F")


def coarsen_increments(fine: np.ndarray, factor: int) -> np.ndarray:
    """Sum ``factor`` consecutive increments along the step axis.

    Accepts ``(n_steps, dims)`` or batched ``(paths, n_steps, dims)`` input.
    Block sums use Neumaier compensated summation.
    """
    if factor < 1:
        raise IndivisibleGrid(f"factor must be >= 1 (got {factor})")
    fine = np.asarray(fine, dtype=float)
    axis = fine.ndim - 2
    n = fine.shape[axis]
    if n % factor:
        raise IndivisibleGrid(f"factor {factor} does not divide {n} steps")
    if factor == 1:
        return fine.copy(order="K")
    shape = fine.shape[:axis] + (n // factor, factor) + fine.shape[axis + 1:]
    blocks = fine.reshape(shape)
    take = [slice(None)] * blocks.ndim
    take[axis + 1] = 0
    total = blocks[tuple(take)].copy()
    comp = np.zeros_like(total)
    for k in range(1, factor):
        take[axis + 1] = k
        v = blocks[tuple(take)]
        t = total + v
        big = np.abs(total) >= np.abs(v)
        comp += np.where(big, (total - t) + v, (v - t) + total)
        total = t
    out = total + comp
    if fine.ndim == 2 and fine.flags.f_contiguous:
        return np.asfortranarray(out)
    return out


def lemma_gap(v):
    """``2(v + 1 - ln v) - (4 - 2 ln 2) - v``; nonnegative for v > 0, zero at v = 2."""
    v = np.asarray(v, dtype=float)
    return 2.0 * (v + 1.0 - np.log(v)) - (4.0 - 2.0 * math.log(2.0)) - v
