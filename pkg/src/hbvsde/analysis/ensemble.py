"""Multi-path runners.

Paths are split into fixed batches whose size depends only on the grid and
state dimension.  Batches may run on worker threads, but results are always
reassembled in ascending path index before any statistic is computed, so
output never depends on the worker count.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..core import RunSeed, SimGrid, derive_stream, sample_wiener_increments
from ..hbv import HbvConfig, hbv_system, x1_system
from ..sde import NegativityPolicy, Scheme, SdeSystem, integrate_paths
from .estimators import LyapunovEstimate, fit_log_slope, shifted_mean

WORKERS_ENV = "HBVSDE_WORKERS"
BATCH_BUDGET = 1 << 22  # doubles of increments held per batch
MAX_BATCH = 256
QUANTILES = (0.05, 0.5, 0.95)


def worker_count(workers: int | None = None) -> int:
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def batch_size(n_steps: int, dims: int) -> int:
    return int(max(1, min(MAX_BATCH, BATCH_BUDGET // max(1, n_steps * dims))))


def path_increments(master_seed: int, path_index: int, grid: SimGrid, dims: int) -> np.ndarray:
    return sample_wiener_increments(grid, derive_stream(RunSeed(master_seed, path_index)), dims)


def batch_increments(master_seed: int, paths: range, grid: SimGrid, dims: int) -> np.ndarray:
    out = np.empty((len(paths), grid.n_steps, dims))
    for j, p in enumerate(paths):
        out[j] = path_increments(master_seed, p, grid, dims)
    return out


def map_batches(fn: Callable[[range], object], n_paths: int, size: int, workers: int | None = None) -> list:
    batches = [range(s, min(s + size, n_paths)) for s in range(0, n_paths, size)]
    nw = min(worker_count(workers), len(batches))
    if nw <= 1:
        return [fn(b) for b in batches]
    with ThreadPoolExecutor(max_workers=nw) as pool:
        return list(pool.map(fn, batches))


def simulate_paths(
    system: SdeSystem,
    initial,
    grid: SimGrid,
    n_paths: int,
    master_seed: int,
    scheme: Scheme | str = Scheme.EULER_MARUYAMA,
    policy: NegativityPolicy | str = NegativityPolicy.RAW,
    record=None,
    workers: int | None = None,
):
    """Run ``n_paths`` independent paths; returns ``(states, events)``.

    ``states`` is ``(n_paths, len(record), dim)``; ``events`` lists
    ``(path, step, component)`` negativity events.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    init = np.asarray(initial, dtype=float).reshape(1, system.dim)
    record = np.arange(grid.n_steps + 1) if record is None else np.asarray(record, dtype=int)

    def run(paths: range):
        inc = batch_increments(master_seed, paths, grid, system.dim)
        x0 = np.repeat(init, len(paths), axis=0)
        return integrate_paths(system, x0, grid, inc, scheme, policy, record, path_offset=paths.start)

    results = map_batches(run, n_paths, batch_size(grid.n_steps, system.dim), workers)
    states = np.concatenate([r[0] for r in results], axis=0)
    events = [e for r in results for e in r[1]]
    return states, events


@dataclass
class EnsembleStats:
    sample_times: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    quantiles: dict[float, np.ndarray]
    n_paths: int
    negativity_fraction: np.ndarray
    events: list[tuple[int, int, int]] = field(default_factory=list)

    def quantile(self, q: float) -> np.ndarray:
        return self.quantiles[q]


def summarize(times: np.ndarray, states: np.ndarray, events=(), dim: int | None = None) -> EnsembleStats:
    n = states.shape[0]
    dim = states.shape[-1] if dim is None else dim
    mean = shifted_mean(states, axis=0)
    if n > 1:
        dev = states - mean
        var = np.mean(dev * dev, axis=0) * (n / (n - 1))
    else:
        var = np.zeros_like(mean)
    qs = {q: np.quantile(states, q, axis=0) for q in QUANTILES}
    neg = np.zeros(dim)
    if n:
        seen = {(p, c) for p, _, c in events}
        for c in range(dim):
            neg[c] = sum(1 for p in range(n) if (p, c) in seen) / n
    return EnsembleStats(np.asarray(times), mean, var, qs, n, neg, list(events))


def ensemble_statistics(
    system: SdeSystem,
    initial,
    grid: SimGrid,
    scheme,
    n_paths: int,
    master_seed: int,
    sample_times=None,
    policy=NegativityPolicy.RAW,
    workers: int | None = None,
) -> EnsembleStats:
    if sample_times is None:
        idx = np.arange(grid.n_steps + 1)
    else:
        idx = np.array([grid.index_of(t) for t in sample_times], dtype=int)
    states, events = simulate_paths(
        system, initial, grid, n_paths, master_seed, scheme, policy, record=idx, workers=workers
    )
    return summarize(grid.t0 + idx * grid.dt, states, events, system.dim)


def run_ensemble(
    config: HbvConfig,
    grid: SimGrid,
    scheme,
    n_paths: int,
    master_seed: int,
    sample_times=None,
    policy=NegativityPolicy.RAW,
    workers: int | None = None,
) -> EnsembleStats:
    system = hbv_system(config.params, config.noise)
    return ensemble_statistics(
        system, config.initial.as_array(), grid, scheme, n_paths, master_seed,
        sample_times, policy, workers,
    )


def lyapunov_ensemble(
    config: HbvConfig,
    grid: SimGrid,
    scheme,
    n_paths: int,
    master_seed: int,
    tail_fraction: float = 0.5,
    workers: int | None = None,
    stability=None,
) -> list[LyapunovEstimate]:
    system = hbv_system(config.params, config.noise)
    times = grid.times()

    def run(paths: range):
        inc = batch_increments(master_seed, paths, grid, 3)
        x0 = np.repeat(config.initial.as_array()[np.newaxis], len(paths), axis=0)
        states, _ = integrate_paths(system, x0, grid, inc, scheme, NegativityPolicy.RAW, path_offset=paths.start)
        out = []
        for s in states:
            est = fit_log_slope(times, s[:, 1] + s[:, 2], tail_fraction)
            if stability is not None:
                est = LyapunovEstimate(
                    est.slope, est.intercept, est.tail_fraction, est.r_squared, est.n_points,
                    bound=stability.decay_bound,
                )
            out.append(est)
        return out

    results = map_batches(run, n_paths, batch_size(grid.n_steps, 3), workers)
    return [e for r in results for e in r]


@dataclass
class CouplingResult:
    """Per-path summaries of ``x(t) - x1(t)`` on shared W1 paths."""

    terminal_diff: np.ndarray
    tail_sup_abs: np.ndarray
    max_excess: np.ndarray
    tail_fraction: float
    horizon: float

    @property
    def n_paths(self) -> int:
        return self.terminal_diff.shape[0]

    @property
    def median_abs_terminal(self) -> float:
        return float(np.median(np.abs(self.terminal_diff)))

    def fraction_exceeding(self, delta: float) -> float:
        return float(np.count_nonzero(np.abs(self.terminal_diff) > delta)) / self.n_paths

    def summary(self) -> dict:
        a = np.abs(self.terminal_diff)
        return {
            "n_paths": self.n_paths,
            "horizon": self.horizon,
            "tail_fraction": self.tail_fraction,
            "median_abs_terminal_diff": float(np.median(a)),
            "mean_terminal_diff": float(shifted_mean(self.terminal_diff)),
            "q95_abs_terminal_diff": float(np.quantile(a, 0.95)),
            "max_abs_terminal_diff": float(a.max()),
            "median_tail_sup_abs": float(np.median(self.tail_sup_abs)),
            "max_excess_over_x1": float(self.max_excess.max()),
        }


def coupled_pair(config: HbvConfig, grid: SimGrid, master_seed: int, path_index: int, scheme=Scheme.EULER_MARUYAMA):
    """Full-system states and x1 states for one path; they share column 0 of the noise."""
    inc = path_increments(master_seed, path_index, grid, 3)
    full = hbv_system(config.params, config.noise)
    aux = x1_system(config.params, config.noise)
    s, _ = integrate_paths(full, config.initial.as_array()[np.newaxis], grid, inc[np.newaxis], scheme)
    a, _ = integrate_paths(aux, np.array([[config.initial.x]]), grid, inc[np.newaxis, :, :1], scheme)
    return s[0], a[0, :, 0]


def coupling_experiment(
    config: HbvConfig,
    grid: SimGrid,
    n_paths: int,
    master_seed: int,
    scheme=Scheme.EULER_MARUYAMA,
    tail_fraction: float = 0.5,
    workers: int | None = None,
) -> CouplingResult:
    full = hbv_system(config.params, config.noise)
    aux = x1_system(config.params, config.noise)
    tail_start = int((1.0 - tail_fraction) * grid.n_steps)

    def run(paths: range):
        inc = batch_increments(master_seed, paths, grid, 3)
        n = len(paths)
        x0 = np.repeat(config.initial.as_array()[np.newaxis], n, axis=0)
        s, _ = integrate_paths(full, x0, grid, inc, scheme, path_offset=paths.start)
        a, _ = integrate_paths(aux, np.full((n, 1), config.initial.x), grid, inc[:, :, :1], scheme,
                               path_offset=paths.start)
        d = s[:, :, 0] - a[:, :, 0]
        return d[:, -1], np.max(np.abs(d[:, tail_start:]), axis=1), np.max(d, axis=1)

    results = map_batches(run, n_paths, batch_size(grid.n_steps, 3), workers)
    return CouplingResult(
        terminal_diff=np.concatenate([r[0] for r in results]),
        tail_sup_abs=np.concatenate([r[1] for r in results]),
        max_excess=np.concatenate([r[2] for r in results]),
        tail_fraction=tail_fraction,
        horizon=grid.t_end,
    )
