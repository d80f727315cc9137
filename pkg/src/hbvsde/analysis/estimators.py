"""Scalar estimators over trajectories and Monte Carlo samples."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from statistics import NormalDist

import numpy as np

from ..core import RunSeed, derive_stream
from ..sde import Trajectory

R2_CLAIM_THRESHOLD = 0.8
MARTINGALE_BLOCK = 1 << 16


class DegenerateTail(ValueError):
    pass


@dataclass(frozen=True)
class LyapunovEstimate:
    slope: float
    intercept: float
    tail_fraction: float
    r_squared: float
    n_points: int
    bound: float | None = None

    @property
    def claim(self) -> bool:
        """Whether the fit is good enough to state a decay rate."""
        return self.r_squared >= R2_CLAIM_THRESHOLD

    def to_dict(self) -> dict:
        d = asdict(self)
        d["claim"] = self.claim
        return d


def shifted_mean(values: np.ndarray, axis: int = 0) -> np.ndarray:
    """Mean computed about the first sample; exact when all samples agree."""
    v = np.asarray(values, dtype=float)
    ref = np.take(v, [0], axis=axis)
    return np.squeeze(ref, axis=axis) + np.mean(v - ref, axis=axis)


def fit_log_slope(times: np.ndarray, values: np.ndarray, tail_fraction: float = 0.5) -> LyapunovEstimate:
    """OLS slope of ``ln(values)`` against time over the final ``tail_fraction``."""
    if not 0.0 < tail_fraction <= 1.0:
        raise ValueError("tail_fraction must lie in (0, 1]")
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    start = int(math.floor((1.0 - tail_fraction) * (times.shape[0] - 1)))
    t = times[start:]
    v = values[start:]
    keep = v > 0
    if np.count_nonzero(keep) < 2:
        raise DegenerateTail("y + z is not positive at two or more tail points")
    t = t[keep]
    lv = np.log(v[keep])
    tc = t - t.mean()
    lc = lv - lv.mean()
    sxx = float(np.dot(tc, tc))
    slope = float(np.dot(tc, lc)) / sxx
    intercept = float(lv.mean() - slope * t.mean())
    ss_tot = float(np.dot(lc, lc))
    resid = lc - slope * tc
    ss_res = float(np.dot(resid, resid))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return LyapunovEstimate(slope, intercept, tail_fraction, r2, int(t.shape[0]))


def estimate_lyapunov(traj: Trajectory, tail_fraction: float = 0.5, stability=None) -> LyapunovEstimate:
    est = fit_log_slope(traj.times, traj.states[:, 1] + traj.states[:, 2], tail_fraction)
    if stability is not None:
        est = LyapunovEstimate(
            est.slope, est.intercept, est.tail_fraction, est.r_squared, est.n_points,
            bound=stability.decay_bound,
        )
    return est


def trapezoid_average(times: np.ndarray, values: np.ndarray, axis: int = -1) -> np.ndarray:
    """Trapezoid-rule mean over the span, taken about the first sample."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    first = np.take(values, 0, axis=axis)
    span = times[-1] - times[0]
    if span <= 0:
        return first
    ref = np.expand_dims(first, axis)
    return first + np.trapezoid(values - ref, times, axis=axis) / span


def time_average(traj: Trajectory, component: int) -> float:
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    return float(trapezoid_average(traj.times, traj.states[:, component]))


def ellipsoid_time_average(times, states, equilibrium, k1: float, k2: float, k3: float) -> float:
    """Path-averaged time average of ``sum_i k_i (u_i - ubar_i)^2``.

    ``states`` is ``(samples, 3)`` for one path or ``(paths, samples, 3)``.
    """
    states = np.asarray(states, dtype=float)
    if states.ndim == 2:
        states = states[np.newaxis]
    eq = np.array([equilibrium.x, equilibrium.y, equilibrium.z])
    w = np.array([k1, k2, k3])
    quad = np.sum(w * (states - eq) ** 2, axis=-1)
    per_path = trapezoid_average(times, quad, axis=-1)
    return float(shifted_mean(per_path))


@dataclass(frozen=True)
class MartingaleCheck:
    estimate: float
    ci_low: float
    ci_high: float
    analytic: float
    n_paths: int
    confidence: float

    @property
    def passed(self) -> bool:
        return self.ci_low <= self.analytic <= self.ci_high

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def exp_martingale_check(
    sigma: float,
    t: float,
    s: float,
    n_paths: int,
    master_seed: int,
    confidence: float = 0.99,
) -> MartingaleCheck:
    """Monte Carlo estimate of ``E[exp(sigma (W(t) - W(s)))]``.

    Paths are drawn in blocks of 65536; block ``b`` uses stream
    ``(master_seed, b)``.
    """
    if s > t:
        raise ValueError("need s <= t")
    if n_paths < 2:
        raise ValueError("need at least two paths")
    scale = math.sqrt(t - s)
    parts = []
    for b, start in enumerate(range(0, n_paths, MARTINGALE_BLOCK)):
        n = min(MARTINGALE_BLOCK, n_paths - start)
        z = derive_stream(RunSeed(master_seed, b)).normals(n)
        parts.append(np.exp(sigma * (scale * z)))
    vals = np.concatenate(parts)
    mean = float(shifted_mean(vals))
    se = float(np.std(vals, ddof=1)) / math.sqrt(n_paths)
    zq = NormalDist().inv_cdf(0.5 + 0.5 * confidence)
    return MartingaleCheck(
        estimate=mean,
        ci_low=mean - zq * se,
        ci_high=mean + zq * se,
        analytic=math.exp(0.5 * sigma * sigma * (t - s)),
        n_paths=n_paths,
        confidence=confidence,
    )
