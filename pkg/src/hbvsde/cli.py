"""Command-line entry point: ``hbvsde <command> [options]``.

Every command writes its outputs, a ``config.ini`` that reproduces the run,
and a ``manifest.json`` with SHA-256 digests into ``--out``.

Exit codes: 0 success (whatever the verdicts), 2 configuration error,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io, plotting
from .analysis import (
    check_ergodicity,
    check_stability,
    coupled_pair,
    coupling_experiment,
    ellipsoid_time_average,
    fit_log_slope,
    lyapunov_ensemble,
    run_ensemble,
    simulate_paths,
    strong_convergence,
)
from .analysis.estimators import DegenerateTail, shifted_mean
from .config import ConfigError, RunConfig
from .core import InvalidParameters, SimGrid
from .hbv import hbv_rhs, hbv_system
from .sde import NonFiniteState, Scheme, gbm_exact, gbm_system, integrate_ode

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
ELLIPSOID_SLACK = 1.5


def _sample_idx(cfg: RunConfig, grid: SimGrid) -> np.ndarray:
    idx = np.arange(0, grid.n_steps + 1, cfg.sample_every)
    if idx[-1] != grid.n_steps:
        idx = np.append(idx, grid.n_steps)
    return idx


def _xyz_header(prefix: str) -> list[str]:
    return [f"{prefix}_{c}" for c in "xyz"]


def cmd_simulate(cfg: RunConfig, out: Path, args) -> tuple[list[Path], dict, dict]:
    grid = cfg.grid()
    idx = _sample_idx(cfg, grid)
    system = hbv_system(cfg.params, cfg.noise)
    states, events = simulate_paths(
        system, cfg.initial.as_array(), grid, cfg.n_paths, cfg.master_seed,
        cfg.scheme, cfg.policy, record=idx,
    )
    t = grid.t0 + idx * grid.dt
    files = []
    for p in range(cfg.n_paths):
        name = "trajectory.csv" if cfg.n_paths == 1 else f"trajectory_{p:04d}.csv"
        files.append(io.write_csv(out / name, ["t", "x", "y", "z"], [t, *states[p].T]))
    files.append(plotting.plot_trajectory(out / "trajectory.svg", t, states[0],
                                          title=f"{cfg.scheme} path 0"))
    extra = {"negativity_events": [list(e) for e in events]}
    return files, {}, extra


def cmd_compare(cfg: RunConfig, out: Path, args):
    grid = cfg.grid()
    idx = _sample_idx(cfg, grid)
    t = grid.t0 + idx * grid.dt
    stats = run_ensemble(cfg.hbv(), grid, cfg.scheme, cfg.n_paths, cfg.master_seed, t, cfg.policy)
    det = integrate_ode(lambda u, _t: hbv_rhs(u, cfg.params), cfg.initial.as_array(), grid,
                        cfg.deterministic).states[idx]
    lo, hi = stats.quantile(0.05), stats.quantile(0.95)
    header = ["t"] + _xyz_header("det") + _xyz_header("mean") + _xyz_header("q05") + _xyz_header("q95")
    cols = [t, *det.T, *stats.mean.T, *lo.T, *hi.T]
    files = [
        io.write_csv(out / "compare.csv", header, cols),
        plotting.plot_compare(out / "compare.svg", t, det, stats.mean, lo, hi,
                              title=f"{cfg.scheme} mean of {cfg.n_paths} paths vs {cfg.deterministic}"),
    ]
    extra = {"negativity_fraction": stats.negativity_fraction.tolist()}
    return files, {}, extra


def cmd_ensemble(cfg: RunConfig, out: Path, args):
    grid = cfg.grid()
    idx = _sample_idx(cfg, grid)
    t = grid.t0 + idx * grid.dt
    stats = run_ensemble(cfg.hbv(), grid, cfg.scheme, cfg.n_paths, cfg.master_seed, t, cfg.policy)
    header = ["t"] + _xyz_header("mean") + _xyz_header("var")
    cols = [t, *stats.mean.T, *stats.variance.T]
    for q in (0.05, 0.5, 0.95):
        header += _xyz_header(f"q{int(round(q * 100)):02d}")
        cols += list(stats.quantile(q).T)
    files = [
        io.write_csv(out / "ensemble.csv", header, cols),
        io.write_json(out / "ensemble.json", {
            "n_paths": stats.n_paths,
            "negativity_fraction": stats.negativity_fraction,
            "negativity_events": [list(e) for e in stats.events],
        }),
        plotting.plot_compare(out / "ensemble.svg", t, stats.quantile(0.5), stats.mean,
                              stats.quantile(0.05), stats.quantile(0.95),
                              title=f"ensemble of {cfg.n_paths} paths (dashed: median)"),
    ]
    return files, {}, {}


def _print_table(title: str, rows: list[tuple[str, object]]):
    print(title)
    w = max(len(k) for k, _ in rows)
    for k, v in rows:
        if isinstance(v, float):
            v = f"{v:.10g}"
        print(f"  {k:<{w}}  {v}")


def cmd_stability(cfg: RunConfig, out: Path, args):
    rep = check_stability(cfg.params, cfg.noise, cfg.gamma)
    files = [io.write_json(out / "stability.json", rep.to_dict())]
    _print_table("Stability of (y, z)", [
        ("gamma", f"{rep.gamma_used:.10g} ({rep.gamma_source})"),
        ("cond a value", rep.cond_a_value),
        ("cond a holds", rep.cond_a_holds),
        ("cond b lhs", rep.cond_b_lhs),
        ("cond b rhs", rep.cond_b_rhs),
        ("cond b holds", rep.cond_b_holds),
        ("sym eigenvalues", ", ".join(f"{e:.10g}" for e in rep.sym_eigenvalues)),
        ("lambda max", rep.lambda_max),
        ("verdict", rep.verdict),
    ] + [("note", n) for n in rep.notes])
    return files, {"stability": rep.verdict}, {}


def cmd_ergodic(cfg: RunConfig, out: Path, args):
    rep = check_ergodicity(cfg.params, cfg.noise)
    d = rep.to_dict()
    if getattr(args, "ellipsoid", False):
        grid = cfg.grid()
        idx = _sample_idx(cfg, grid)
        states, _ = simulate_paths(hbv_system(cfg.params, cfg.noise), cfg.initial.as_array(), grid,
                                   cfg.n_paths, cfg.master_seed, cfg.scheme, cfg.policy, record=idx)
        avg = ellipsoid_time_average(grid.t0 + idx * grid.dt, states, rep.equilibrium, rep.k1, rep.k2, rep.k3)
        d["ellipsoid"] = {
            "time_average": avg,
            "horizon": grid.t_end,
            "n_paths": cfg.n_paths,
            "slack": ELLIPSOID_SLACK,
            "within_omega": avg <= ELLIPSOID_SLACK * rep.omega,
            "within_omega_squared": avg <= ELLIPSOID_SLACK * rep.omega_squared,
        }
    files = [io.write_json(out / "ergodic.json", d)]
    rows = [
        ("equilibrium", f"({rep.equilibrium.x:.10g}, {rep.equilibrium.y:.10g}, {rep.equilibrium.z:.10g}) "
                        f"[{rep.equilibrium_kind}]"),
        ("mu*", rep.mu_star),
        ("k1", rep.k1), ("k2", rep.k2), ("k3", rep.k3),
        ("omega", rep.omega),
        ("omega (squared means)", rep.omega_squared),
        ("derived r0", rep.r0),
        ("verdict", rep.verdict),
    ]
    if "ellipsoid" in d:
        rows.append(("ellipsoid time average", d["ellipsoid"]["time_average"]))
    _print_table("Ergodicity conditions", rows + [("note", n) for n in rep.notes])
    return files, {"ergodicity": rep.verdict}, {}


def cmd_lyapunov(cfg: RunConfig, out: Path, args):
    stab = check_stability(cfg.params, cfg.noise, cfg.gamma)
    if args.input:
        header, data = io.read_csv(Path(args.input))
        cols = {h: i for i, h in enumerate(header)}
        if "t" not in cols or not ({"y", "z"} <= cols.keys() or "y_plus_z" in cols):
            raise ConfigError("input CSV needs columns t and either y,z or y_plus_z")
        s = data[:, cols["y_plus_z"]] if "y_plus_z" in cols else data[:, cols["y"]] + data[:, cols["z"]]
        est = fit_log_slope(data[:, cols["t"]], s, cfg.tail_fraction)
        files = [io.write_json(out / "lyapunov.json", {"input": Path(args.input).name, "estimate": est.to_dict()})]
        return files, {"lyapunov_claim": est.claim}, {}

    grid = cfg.grid()
    ests = lyapunov_ensemble(cfg.hbv(), grid, cfg.scheme, cfg.n_paths, cfg.master_seed,
                             cfg.tail_fraction, stability=stab)
    slopes = np.array([e.slope for e in ests])
    summary = {
        "n_paths": cfg.n_paths,
        "tail_fraction": cfg.tail_fraction,
        "mean_slope": float(shifted_mean(slopes)),
        "fraction_negative": float(np.mean(slopes < 0)),
        "fraction_claimed": float(np.mean([e.claim for e in ests])),
        "stability_verdict": stab.verdict,
        "stability_decay_bound": stab.decay_bound,
    }
    pair, _ = coupled_pair(cfg.hbv(), grid, cfg.master_seed, 0, Scheme(cfg.scheme))
    t = grid.times()
    with np.errstate(divide="ignore"):
        log_yz = np.log(pair[:, 1] + pair[:, 2])
    idx = _sample_idx(cfg, grid)
    files = [
        io.write_csv(out / "lyapunov.csv", ["path", "slope", "intercept", "r_squared", "claim"],
                     [np.arange(len(ests)), slopes, np.array([e.intercept for e in ests]),
                      np.array([e.r_squared for e in ests]), np.array([e.claim for e in ests])]),
        io.write_json(out / "lyapunov.json", summary),
        plotting.plot_lines(out / "lyapunov.svg", t[idx], {"ln(y+z), path 0": log_yz[idx]}, "t", "ln(y+z)"),
    ]
    return files, {"stability": stab.verdict, "lyapunov_fraction_negative": summary["fraction_negative"]}, {}


def cmd_couple(cfg: RunConfig, out: Path, args):
    grid = cfg.grid()
    hc = cfg.hbv()
    res = coupling_experiment(hc, grid, cfg.n_paths, cfg.master_seed, cfg.scheme, cfg.tail_fraction)
    full, x1 = coupled_pair(hc, grid, cfg.master_seed, 0, Scheme(cfg.scheme))
    idx = _sample_idx(cfg, grid)
    t = grid.t0 + idx * grid.dt
    diff = full[idx, 0] - x1[idx]
    files = [
        io.write_csv(out / "couple.csv", ["path", "terminal_diff", "tail_sup_abs", "max_excess"],
                     [np.arange(res.n_paths), res.terminal_diff, res.tail_sup_abs, res.max_excess]),
        io.write_csv(out / "couple_path.csv", ["t", "x", "x1", "diff"], [t, full[idx, 0], x1[idx], diff]),
        io.write_json(out / "couple.json", res.summary()),
        plotting.plot_trajectory(out / "couple.svg", t, np.column_stack([full[idx, 0], x1[idx], diff]),
                                 title="path 0: x, x1 and x - x1", labels=("x", "x1", "x - x1")),
    ]
    return files, {}, {}


def cmd_convergence(cfg: RunConfig, out: Path, args):
    c = cfg.convergence
    system = gbm_system(c.a, c.b)
    reports = {}
    for scheme in ("em", "milstein"):
        reports[scheme] = strong_convergence(
            system, [c.x0], c.t_end, c.base_steps, c.levels, cfg.n_paths, cfg.master_seed,
            scheme, c.reference, exact=lambda x0, T, w: gbm_exact(x0, c.a, c.b, T, w),
        )
    dts = np.array(reports["em"].dt_ladder)
    files = [
        io.write_json(out / "convergence.json", {
            "preset": "gbm", "a": c.a, "b": c.b, "x0": c.x0, "t_end": c.t_end,
            **{k: r.to_dict() for k, r in reports.items()},
        }),
        io.write_csv(out / "convergence.csv", ["dt", "error_em", "error_milstein"],
                     [dts, np.array(reports["em"].strong_errors), np.array(reports["milstein"].strong_errors)]),
        plotting.plot_lines(out / "convergence.svg", dts,
                            {f"{k} (order {r.fitted_order:.3f})": np.array(r.strong_errors)
                             for k, r in reports.items()},
                            "dt", "E|X(T) - X_ref(T)|", logx=True, logy=True),
    ]
    verdicts = {f"order_{k}": r.fitted_order for k, r in reports.items()}
    return files, verdicts, {}


COMMANDS = {
    "simulate": (cmd_simulate, "integrate sample paths and write t,x,y,z CSV"),
    "compare": (cmd_compare, "stochastic ensemble mean and band against the deterministic model"),
    "ensemble": (cmd_ensemble, "per-time ensemble statistics"),
    "stability": (cmd_stability, "check the (y, z) exponential-stability conditions"),
    "ergodic": (cmd_ergodic, "check the ergodicity conditions"),
    "lyapunov": (cmd_lyapunov, "fit decay rates of ln(y+z)"),
    "couple": (cmd_couple, "compare x(t) with the infection-free process x1(t) on shared noise"),
    "convergence": (cmd_convergence, "strong convergence orders of EM and Milstein on GBM"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file or a previous manifest.json")
    common.add_argument("--seed", type=int)
    common.add_argument("--scheme", choices=["em", "milstein"])
    common.add_argument("--paths", type=int)
    common.add_argument("--dt", type=float)
    common.add_argument("--t-end", type=float, dest="t_end")
    common.add_argument("--out")
    common.add_argument("--policy", choices=["raw", "project"])
    common.add_argument("--gamma", type=float)
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override any config key, e.g. --set noise.sigma1=0")

    parser = argparse.ArgumentParser(
        prog="hbvsde",
        description="Simulate and analyse the stochastic HBV infection model.",
        epilog="exit codes: 0 success (whatever the verdicts), 2 configuration error, 3 numerical failure",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        sp = sub.add_parser(name, parents=[common], help=help_)
        if name == "lyapunov":
            sp.add_argument("--input", help="CSV with columns t and y,z (or y_plus_z)")
        if name == "ergodic":
            sp.add_argument("--ellipsoid", action="store_true",
                            help="also simulate and report the ellipsoid time average")
        if name == "compare":
            sp.add_argument("--deterministic", choices=["rk4", "euler"])
    return parser


def config_from_args(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.set:
        sections: dict[str, dict] = {}
        for item in args.set:
            key, sep, value = item.partition("=")
            sec, dot, k = key.partition(".")
            if not sep or not dot:
                raise ConfigError(f"--set expects SECTION.KEY=VALUE (got {item!r})")
            sections.setdefault(sec.strip(), {})[k.strip()] = value.strip()
        cfg = RunConfig.from_sections(sections, cfg)
    over = {
        "master_seed": args.seed,
        "scheme": args.scheme,
        "n_paths": args.paths,
        "dt": args.dt,
        "t_end": args.t_end,
        "out": args.out,
        "policy": args.policy,
        "gamma": args.gamma,
        "deterministic": getattr(args, "deterministic", None),
    }
    cfg = replace(cfg, **{k: v for k, v in over.items() if v is not None})
    if args.command == "convergence" and args.t_end is not None:
        cfg = replace(cfg, convergence=replace(cfg.convergence, t_end=args.t_end))
    return cfg.resolved(args.command).validate()


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
    except (ConfigError, InvalidParameters) as e:
        print(f"hbvsde: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    fn = COMMANDS[args.command][0]
    start = time.perf_counter()
    try:
        files, verdicts, extra = fn(cfg, out, args)
    except NonFiniteState as e:
        print(f"hbvsde: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except DegenerateTail as e:
        print(f"hbvsde: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, OSError) as e:
        print(f"hbvsde: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    cfg_path = out / "config.ini"
    cfg_path.write_text(cfg.to_ini(), newline="\n")
    files.append(cfg_path)
    io.write_manifest(out, args.command, cfg.to_sections(), files, verdicts,
                      time.perf_counter() - start, extra)
    return EXIT_OK

