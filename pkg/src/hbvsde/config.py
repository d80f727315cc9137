"""Run configuration: INI-style file format, defaults and serialization.

Grammar
-------
The file is parsed by :mod:`configparser`.  Lines are ``key = value``;
``#`` and ``;`` start comments; section headers are ``[name]``.  Every key is
optional.  Recognised sections and keys::

    [model]        lam mu1 mu2 mu3 beta eta epsilon p q   (floats)
                   x0 y0 z0                                (initial state)
    [noise]        sigma1 sigma2 sigma3
    [grid]         t0 t_end dt
    [run]          scheme = em | milstein
                   paths  = integer
                   seed   = integer in [0, 2**64)
                   policy = raw | project
                   out    = directory
                   gamma  = float | none
                   tail_fraction = float in (0, 1]
                   deterministic = rk4 | euler
                   sample_every  = integer
    [convergence]  a b x0 t_end base_steps levels reference(analytic|finegrid)

Unknown sections or keys are errors.
"""
from __future__ import annotations

import configparser
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .core import ModelParams, NoiseParams, StateVec, SimGrid, validate_params
from .hbv import DEFAULT_INITIAL, HbvConfig

DEFAULT_PATHS = {
    "simulate": 1,
    "compare": 500,
    "ensemble": 200,
    "lyapunov": 64,
    "couple": 256,
    "ergodic": 16,
    "stability": 1,
    "convergence": 2000,
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ConvergenceOptions:
    a: float = 0.05
    b: float = 0.4
    x0: float = 1.0
    t_end: float = 1.0
    base_steps: int = 16
    levels: int = 7
    reference: str = "analytic"


@dataclass(frozen=True)
class RunConfig:
    params: ModelParams = field(default_factory=ModelParams)
    noise: NoiseParams = field(default_factory=NoiseParams)
    initial: StateVec = DEFAULT_INITIAL
    t0: float = 0.0
    t_end: float = 5.0
    dt: float = 1e-3
    scheme: str = "em"
    n_paths: int | None = None
    master_seed: int = 42
    policy: str = "raw"
    out: str = "out"
    gamma: float | None = None
    tail_fraction: float = 0.5
    deterministic: str = "rk4"
    sample_every: int = 1
    convergence: ConvergenceOptions = field(default_factory=ConvergenceOptions)

    def validate(self) -> "RunConfig":
        try:
            validate_params(self.params, self.noise)
            HbvConfig(self.params, self.noise, self.initial)
            self.grid()
        except ValueError as e:
            raise ConfigError(str(e)) from e
        if self.scheme not in ("em", "milstein"):
            raise ConfigError(f"scheme must be em or milstein (got {self.scheme!r})")
        if self.policy not in ("raw", "project"):
            raise ConfigError(f"policy must be raw or project (got {self.policy!r})")
        if self.deterministic not in ("rk4", "euler"):
            raise ConfigError(f"deterministic must be rk4 or euler (got {self.deterministic!r})")
        if self.n_paths is not None and self.n_paths < 1:
            raise ConfigError("paths must be >= 1")
        if not 0 <= self.master_seed < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.gamma is not None and not self.gamma > 0:
            raise ConfigError("gamma must be positive")
        if not 0 < self.tail_fraction <= 1:
            raise ConfigError("tail_fraction must lie in (0, 1]")
        if self.sample_every < 1:
            raise ConfigError("sample_every must be >= 1")
        c = self.convergence
        if c.levels < 3 or c.base_steps < 1 or c.reference not in ("analytic", "finegrid"):
            raise ConfigError("convergence needs levels >= 3, base_steps >= 1, reference analytic|finegrid")
        return self

    def grid(self) -> SimGrid:
        return SimGrid.from_dt(self.t_end, self.dt, self.t0)

    def hbv(self) -> HbvConfig:
        return HbvConfig(self.params, self.noise, self.initial)

    def resolved(self, command: str) -> "RunConfig":
        if self.n_paths is None:
            return replace(self, n_paths=DEFAULT_PATHS.get(command, 1))
        return self

    # serialization

    def to_sections(self) -> dict[str, dict]:
        model = self.params.as_dict()
        model.update(x0=self.initial.x, y0=self.initial.y, z0=self.initial.z)
        return {
            "model": model,
            "noise": self.noise.as_dict(),
            "grid": {"t0": self.t0, "t_end": self.t_end, "dt": self.dt},
            "run": {
                "scheme": self.scheme,
                "paths": self.n_paths,
                "seed": self.master_seed,
                "policy": self.policy,
                "out": self.out,
                "gamma": self.gamma,
                "tail_fraction": self.tail_fraction,
                "deterministic": self.deterministic,
                "sample_every": self.sample_every,
            },
            "convergence": asdict(self.convergence),
        }

    def to_ini(self) -> str:
        lines = []
        for name, sec in self.to_sections().items():
            lines.append(f"[{name}]")
            for k, v in sec.items():
                if v is None:
                    v = "none"
                elif isinstance(v, float):
                    v = repr(v)
                lines.append(f"{k} = {v}")
            lines.append("")
        return "\n".join(lines)

    @classmethod
    def from_sections(cls, sections: dict[str, dict], base: "RunConfig | None" = None) -> "RunConfig":
        cfg = base or cls()
        known = {"model", "noise", "grid", "run", "convergence"}
        for name in sections:
            if name not in known:
                raise ConfigError(f"unknown section [{name}]")
        try:
            model = dict(sections.get("model", {}))
            init = {k: model.pop(k) for k in ("x0", "y0", "z0") if k in model}
            params = _update(cfg.params, model, float, "model")
            initial = StateVec(
                float(init.get("x0", cfg.initial.x)),
                float(init.get("y0", cfg.initial.y)),
                float(init.get("z0", cfg.initial.z)),
            )
            noise = _update(cfg.noise, sections.get("noise", {}), float, "noise")
            grid = dict(sections.get("grid", {}))
            _reject_unknown(grid, {"t0", "t_end", "dt"}, "grid")
            run = dict(sections.get("run", {}))
            _reject_unknown(run, {"scheme", "paths", "seed", "policy", "out", "gamma", "tail_fraction",
                                  "deterministic", "sample_every"}, "run")
            conv = _update(cfg.convergence, sections.get("convergence", {}), None, "convergence")
            out = replace(
                cfg,
                params=params,
                noise=noise,
                initial=initial,
                t0=float(grid.get("t0", cfg.t0)),
                t_end=float(grid.get("t_end", cfg.t_end)),
                dt=float(grid.get("dt", cfg.dt)),
                scheme=str(run.get("scheme", cfg.scheme)).lower(),
                n_paths=_opt(run.get("paths", cfg.n_paths), int),
                master_seed=int(run.get("seed", cfg.master_seed)),
                policy=str(run.get("policy", cfg.policy)).lower(),
                out=str(run.get("out", cfg.out)),
                gamma=_opt(run.get("gamma", cfg.gamma), float),
                tail_fraction=float(run.get("tail_fraction", cfg.tail_fraction)),
                deterministic=str(run.get("deterministic", cfg.deterministic)).lower(),
                sample_every=int(run.get("sample_every", cfg.sample_every)),
                convergence=conv,
            )
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(str(e)) from e
        return out

    @classmethod
    def from_ini_text(cls, text: str, base: "RunConfig | None" = None) -> "RunConfig":
        cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        try:
            cp.read_string(text)
        except configparser.Error as e:
            raise ConfigError(str(e)) from e
        return cls.from_sections({s: dict(cp[s]) for s in cp.sections()}, base)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        """Read an INI file, or the ``config`` block of a run manifest (``.json``)."""
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as e:
            raise ConfigError(f"cannot read {path}: {e}") from e
        if path.suffix == ".json":
            try:
                return cls.from_sections(json.loads(text)["config"])
            except (KeyError, json.JSONDecodeError) as e:
                raise ConfigError(f"{path} is not a run manifest") from e
        return cls.from_ini_text(text)


def _opt(v, typ):
    if v is None or (isinstance(v, str) and v.strip().lower() in ("none", "")):
        return None
    return typ(v)


def _reject_unknown(d: dict, allowed: set, section: str):
    extra = sorted(set(d) - allowed)
    if extra:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(extra)}")


def _update(obj, values: dict, cast, section: str):
    names = {f.name: f for f in fields(obj)}
    _reject_unknown(values, set(names), section)
    kw = {}
    for k, v in values.items():
        if cast is not None:
            kw[k] = cast(v)
        else:
            cur = getattr(obj, k)
            kw[k] = type(cur)(v) if not isinstance(cur, str) else str(v).lower()
    return replace(obj, **kw)
