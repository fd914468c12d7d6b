"""Command-line entry point: ``ifcsim <subcommand> [--config PATH] [--seed S] [--out DIR] [--workers N]``.

Every subcommand writes a sorted key-value ``report.txt`` (with the resolved
configuration echoed) plus its data files.  Exit codes: 0 all checks pass,
1 a check failed, 2 configuration error, 3 numerical abort.
"""
from __future__ import annotations

import argparse
import functools
import io
import math
import os
import sys
from typing import Optional

import numpy as np

from .analysis import (
    CylinderFunction,
    increment_statistic,
    ito_residual,
    lyons_zheng_residual,
    qv_check,
    reversibility_test,
)
from .config import default_schedule, label
from .diagnostics import CutoffParams, carre_du_champ_chi, collision_monitor, cutoff_chi, kappa_exit, nbj_counter
from .errors import CollisionAbort, CollisionTooClose, ConfigError, IfcSimError, MCMCNotMixed, NonConvergentSum
from .experiments import (
    consistency_member,
    dyson_equilibrium,
    ginibre_equilibrium,
    lattice_initial,
    median_order,
    ruelle_initial,
    uniqueness_member,
)
from .fields import estimate_correlation, h1_convergence_check, sine_rho2_bin_average
from .ifc import HRegion, b1_report, exit_time_sigma, freeze_env
from .integrator import BrownianPath, SolverConfig, run_parallel, simulate, write_brownian_csv, write_trajectory_csv
from .models import InteractionSpec, Kind
from .report import Report, format_value
from .rng import make_rng, member_seed
from .runconfig import RunConfig, default_out_dir, load_config
from .sampler import SamplerConfig, dyson_confinement, natural_scale, sample_loggas, sample_poisson, unfold_bulk, Window

__all__ = ["main", "run_experiment", "build_spec", "initial_state"]

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
NUMERIC_ERRORS = (CollisionAbort, CollisionTooClose, MCMCNotMixed, NonConvergentSum)


# ------------------------------------------------------------------ building blocks

def build_spec(cfg: RunConfig, n: int) -> InteractionSpec:
    kind = Kind.parse(cfg["model.kind"])
    beta = cfg["model.beta"]
    conf = cfg["model.confinement"]
    if conf == "auto":
        conf = dyson_confinement(n, beta) if kind is Kind.SINE_BETA else 0.0
    try:
        return InteractionSpec(kind, dim=cfg["model.dim"], beta=beta, alpha=cfg["model.alpha"],
                               riesz_a=cfg["model.riesz_a"], confinement=conf, cutoff=cfg["model.cutoff"])
    except ValueError as exc:
        raise ConfigError(f"model block: {exc}") from None


def build_solver(cfg: RunConfig, seed: int, dt: Optional[float] = None) -> SolverConfig:
    try:
        return SolverConfig(scheme=cfg["solver.scheme"], dt=cfg["solver.dt"] if dt is None else dt,
                            T=cfg["solver.T"], min_gap_substep_threshold=cfg["solver.min_gap_substep_threshold"],
                            max_substep_depth=cfg["solver.max_substep_depth"],
                            collision_abort_gap=cfg["solver.collision_abort_gap"], seed=seed,
                            finest_factor=cfg["solver.finest_factor"])
    except ValueError as exc:
        raise ConfigError(f"solver block: {exc}") from None


def initial_state(cfg: RunConfig, spec: InteractionSpec, member: int) -> np.ndarray:
    n = cfg["sampler.n_particles"]
    seed = cfg["seed"]
    init = cfg["sampler.init"]
    d = spec.dim
    if init == "lattice":
        offset = cfg["sampler.spacing"] * (n + 1) / 2.0 if spec.kind is Kind.BESSEL else 0.0
        return lattice_initial(n, d, cfg["sampler.spacing"], offset).positions
    if init == "cluster":
        return lattice_initial(n, d, 0.05).positions
    if init == "poisson":
        half = cfg["sampler.window"] / 2.0
        win = Window.box([-half] * d, [half] * d)
        sc = SamplerConfig(n_particles=n, window=win, seed=member_seed(seed, member))
        return label(sample_poisson(sc)).positions
    if spec.kind is Kind.SINE_BETA:
        return dyson_equilibrium(n, spec.beta, seed, member).positions
    if spec.kind in (Kind.GINIBRE_REP1, Kind.GINIBRE_REP2):
        return label(ginibre_equilibrium(n, seed, member)).positions
    if spec.kind in (Kind.RUELLE_COMPACT, Kind.FREE):
        return ruelle_initial(n, seed, member, d, cfg["sampler.window"]).positions
    raise ConfigError(f"sampler.init = equilibrium is not available for model.kind = {spec.kind.value}")


def _members(cfg: RunConfig, workers: int, fn) -> list:
    jobs = list(range(cfg["experiment.ensemble"]))
    return run_parallel(functools.partial(fn, cfg), jobs, workers)


# ------------------------------------------------------------------ subcommands

def _simulate_member(cfg: RunConfig, k: int):
    n = cfg["sampler.n_particles"]
    spec = build_spec(cfg, n)
    x0 = initial_state(cfg, spec, k)
    solver = build_solver(cfg, member_seed(cfg["seed"], k))
    traj, bp = simulate(x0, spec, solver)
    return traj, bp


def cmd_simulate(cfg: RunConfig, workers: int):
    runs = _members(cfg, workers, _simulate_member)
    rep = Report()
    rep.add("subcommand", "simulate")
    rep.add_samples("final.mean_position", [float(tr.positions[-1].mean()) for tr, _ in runs])
    rep.add_samples("events.substeps", [sum(e[0] == "substep" for e in tr.events) for tr, _ in runs])
    rep.add_samples("events.label_warnings", [sum(e[0] == "label_warning" for e in tr.events) for tr, _ in runs])
    traj, bp = runs[0]
    t_buf, b_buf = io.StringIO(), io.StringIO()
    write_trajectory_csv(traj, t_buf)
    write_brownian_csv(bp, b_buf, model=traj.meta["model"])
    return rep, {}, {"trajectory.csv": t_buf.getvalue(), "brownian.csv": b_buf.getvalue()}


def _ifc_member(cfg: RunConfig, k: int):
    n = cfg["sampler.n_particles"]
    spec = build_spec(cfg, n)
    x0 = initial_state(cfg, spec, k)
    seed = member_seed(cfg["seed"], k)
    ladder = sorted(cfg["experiment.dt_ladder"], reverse=True)
    m = cfg["experiment.m"]
    if not 0 <= m <= n:
        raise ConfigError(f"experiment.m = {m} outside [0, {n}]")
    cons = consistency_member(x0, spec, ladder, [m], cfg["solver.T"], seed)
    uniq = uniqueness_member(x0, spec, m, ladder, cfg["solver.T"], seed, cfg["experiment.schemes"])
    p, q, r = cfg["experiment.region"]
    source, _ = simulate(x0, spec, build_solver(cfg, seed, dt=min(ladder)))
    tagged, env = freeze_env(source, m)
    sigma = exit_time_sigma(tagged, env, HRegion(p, q, r, default_schedule(spec.dim)))
    return cons["errors"][m], cons["exact_full"], uniq, sigma.censored


def cmd_ifc_check(cfg: RunConfig, workers: int):
    res = _members(cfg, workers, _ifc_member)
    ladder = sorted(cfg["experiment.dt_ladder"], reverse=True)
    cons = np.array([r[0] for r in res])
    uniq = np.array([r[2] for r in res])
    rep = Report()
    rep.add("subcommand", "ifc-check")
    for j, dt in enumerate(ladder):
        rep.add_samples(f"consistency.dt={format_value(dt)}", cons[:, j])
        rep.add_samples(f"uniqueness.dt={format_value(dt)}", uniq[:, j])
    cmed, _ = median_order(ladder, cons)
    umed, uorder = median_order(ladder, uniq)
    rep.add("consistency.medians", [float(v) for v in cmed])
    rep.add("uniqueness.medians", [float(v) for v in umed])
    rep.add("uniqueness.order", uorder)
    rep.add("region.censored_fraction", float(np.mean([r[3] for r in res])))
    checks = {
        "consistency_nonincreasing": bool(np.all(np.diff(cmed) <= 0)),
        "consistency_exact_at_full_m": all(r[1] for r in res),
        "uniqueness_order": bool(uorder >= cfg["experiment.min_order"]) if len(ladder) > 1 else True,
    }
    return rep, checks, {}


def _diagnose_member(cfg: RunConfig, k: int):
    traj, _ = _simulate_member(cfg, k)
    n = cfg["sampler.n_particles"]
    spec = build_spec(cfg, n)
    sched = default_schedule(spec.dim)
    p, q, r = cfg["experiment.region"]
    b1 = b1_report(traj, min(cfg["experiment.m"], n), sched, p, q, r)
    cq, cQ = cfg["experiment.chi"]
    params = CutoffParams(schedule=sched, Q=cQ)
    cfg0 = traj.configuration(0)
    chi0 = cutoff_chi(cfg0, cq, params) if cfg0.simple else math.nan
    cdc0 = carre_du_champ_chi(cfg0, cq, params) if cfg0.simple else math.nan
    kap = kappa_exit(traj, cfg["experiment.kappa"], sched)
    nbj = nbj_counter(traj, cfg["experiment.nbj"])
    return traj, b1.uncovered_fraction, chi0, cdc0, kap.censored, nbj


def cmd_diagnose(cfg: RunConfig, workers: int):
    res = _members(cfg, workers, _diagnose_member)
    trajs = [r[0] for r in res]
    mon = collision_monitor(trajs)
    rep = Report()
    rep.add("subcommand", "diagnose")
    rep.add("collision.flags", mon.n_flags)
    rep.add("collision.empty", mon.empty)
    if cfg["experiment.upsilon"]:
        rep.add("upsilon.mean_start", mon.upsilon_start)
        rep.add("upsilon.mean_end", mon.upsilon_end)
    rep.add_samples("b1.uncovered_fraction", [r[1] for r in res])
    rep.add_samples("chi.start", [r[2] for r in res])
    rep.add_samples("carre_du_champ.start", [r[3] for r in res])
    rep.add("kappa.censored_fraction", float(np.mean([r[4] for r in res])))
    rep.add_samples("nbj", [r[5] for r in res])
    checks = {
        "no_collision_flags": mon.n_flags == 0,
        "b1_covered": all(r[1] == 0.0 for r in res),
    }
    if cfg["experiment.upsilon"] and not mon.empty:
        checks["upsilon_bounded"] = bool(mon.upsilon_end <= 3.0 * mon.upsilon_start)
    return rep, checks, {}


def _fields_member(cfg: RunConfig, job):
    n, k = job
    sc = SamplerConfig(n_particles=n, beta=cfg["model.beta"], seed=cfg["seed"])
    sample = sample_loggas(sc, "dyson", rng=make_rng(cfg["seed"], n * 100003 + k))
    return unfold_bulk(natural_scale(sample, "dyson", n), "dyson")


def cmd_fields(cfg: RunConfig, workers: int):
    if Kind.parse(cfg["model.kind"]) is not Kind.SINE_BETA:
        raise ConfigError("fields needs model.kind = SineBeta")
    ns = sorted(cfg["experiment.n_ladder"])
    if len(ns) < 3:
        raise ConfigError(f"experiment.n_ladder = {format_value(ns)}: needs at least three sizes")
    size = cfg["experiment.ensemble"]
    jobs = [(n, k) for n in ns for k in range(size)]
    samples = run_parallel(functools.partial(_fields_member, cfg), jobs, workers)
    half = cfg["experiment.window"] / 2.0
    edges = np.linspace(-3.0, 3.0, 13)
    ens = {n: samples[i * size:(i + 1) * size] for i, n in enumerate(ns)}
    h1 = h1_convergence_check(ens, edges, window=(-half, half), min_members=min(50, size))
    rep = Report()
    rep.add("subcommand", "fields")
    rep.add("h1.ns", ns)
    rep.add("h1.gaps", [float(g) for g in h1.gaps])
    rep.add("h1.decreasing", h1.decreasing)
    ref = sine_rho2_bin_average(edges)
    buf = io.StringIO()
    buf.write(f"# model=SineBeta N={','.join(map(str, ns))} ensemble={size} seed={cfg['seed']}\n")
    buf.write("N,lo,hi,rho2_hat,stderr,rho2_sine\n")
    for n in ns:
        est = estimate_correlation(ens[n], 2, edges, mode="separation", window=(-half, half),
                                   min_members=min(50, size))
        for j in range(len(edges) - 1):
            buf.write(",".join([str(n)] + [format_value(float(v)) for v in
                                            (edges[j], edges[j + 1], est.values[j], est.stderr[j], ref[j])]) + "\n")
    return rep, {"h1_decreasing": h1.decreasing}, {"fields.csv": buf.getvalue()}


def _reverse_member(cfg: RunConfig, k: int):
    n = cfg["sampler.n_particles"]
    spec = build_spec(cfg, n)
    x0 = initial_state(cfg, spec, k)
    seed = member_seed(cfg["seed"], k)
    ladder = sorted(cfg["experiment.dt_ladder"], reverse=True)
    T = cfg["solver.T"]
    bp = BrownianPath.generate(n, spec.dim, T, min(ladder) / 16.0, seed=seed)
    F = CylinderFunction.gap_gaussian() if n >= 2 and spec.dim == 1 else CylinderFunction.coordinate()
    ito, lz = [], []
    for dt in ladder:
        traj, _ = simulate(x0, spec, build_solver(cfg, seed, dt=dt), bp)
        ito.append(ito_residual(F, traj, bp, spec))
        lz.append(lyons_zheng_residual(F, traj, bp, spec))
    qv = qv_check(CylinderFunction.coordinate(), traj, bp, spec)
    return ito, lz, qv.relative_gap, traj


def cmd_reverse_check(cfg: RunConfig, workers: int):
    res = _members(cfg, workers, _reverse_member)
    ladder = sorted(cfg["experiment.dt_ladder"], reverse=True)
    ito = np.array([r[0] for r in res])
    lz = np.array([r[1] for r in res])
    imed, iorder = median_order(ladder, ito)
    lmed, lorder = median_order(ladder, lz)
    rep = Report()
    rep.add("subcommand", "reverse-check")
    rep.add("ito.medians", [float(v) for v in imed])
    rep.add("lz.medians", [float(v) for v in lmed])
    rep.add("ito.order", iorder)
    rep.add("lz.order", lorder)
    rep.add_samples("qv.relative_gap", [r[2] for r in res])
    trajs = [r[3] for r in res]
    if len(trajs) >= 20:
        n = cfg["sampler.n_particles"]
        F = CylinderFunction.gap_gaussian() if n >= 2 else CylinderFunction.coordinate()
        rep.add("reversibility.p", reversibility_test(trajs, increment_statistic(F)))
    else:
        rep.add("reversibility.p", "skipped")
    checks = {}
    if len(ladder) > 1:
        checks["ito_decreasing"] = bool(np.all(np.diff(imed) <= 0))
        checks["lz_decreasing"] = bool(np.all(np.diff(lmed) <= 0))
    return rep, checks, {}


COMMANDS = {
    "simulate": cmd_simulate,
    "ifc-check": cmd_ifc_check,
    "diagnose": cmd_diagnose,
    "fields": cmd_fields,
    "reverse-check": cmd_reverse_check,
}


# ------------------------------------------------------------------ driver

def _write(out_dir: str, name: str, text: str) -> None:
    with open(os.path.join(out_dir, name), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def validate(cfg: RunConfig) -> None:
    """Reject configurations that would only fail once a run is under way."""
    n = cfg["sampler.n_particles"]
    build_spec(cfg, n)
    build_solver(cfg, 0)
    for dt in cfg["experiment.dt_ladder"]:
        try:
            build_solver(cfg, 0, dt=dt)
        except ConfigError as exc:
            raise ConfigError(f"experiment.dt_ladder = {format_value(cfg['experiment.dt_ladder'])}: {exc}") from None
    if not 0 <= cfg["experiment.m"] <= n:
        raise ConfigError(f"experiment.m = {cfg['experiment.m']} outside [0, {n}]")


def run_experiment(command: str, cfg: RunConfig, out_dir: str, workers: int = 1) -> int:
    """Run one subcommand (or "all") and write its artifacts; returns the exit code."""
    validate(cfg)
    if command == "all":
        codes = [run_experiment(c, cfg, os.path.join(out_dir, c), workers) for c in COMMANDS]
        return max(codes)
    os.makedirs(out_dir, exist_ok=True)
    try:
        rep, checks, files = COMMANDS[command](cfg, workers)
    except NUMERIC_ERRORS as exc:
        lines = [f"error = {type(exc).__name__}", f"message = {exc}"]
        for ev in getattr(exc, "events", [])[-50:]:
            lines.append("event = " + ",".join(format_value(v) for v in ev))
        _write(out_dir, "abort.txt", "\n".join(lines) + "\n")
        return EXIT_NUMERIC
    for name, ok in checks.items():
        rep.add(f"check.{name}", ok)
    rep.add("status", "pass" if all(checks.values()) else "fail")
    for name in sorted(files):
        _write(out_dir, name, files[name])
    _write(out_dir, "report.txt", rep.to_text() + "\n".join(cfg.resolved_lines()) + "\n")
    return EXIT_OK if all(checks.values()) else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", help="output directory (default $IFCSIM_OUT or ./ifcsim-out)")
    common.add_argument("--workers", type=int, default=1, help="worker processes for ensembles")
    parser = argparse.ArgumentParser(prog="ifcsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="simulate an ensemble and store paths")
    ifc = sub.add_parser("ifc-check", parents=[common], help="frozen-environment consistency and uniqueness")
    ifc.add_argument("--m", type=int)
    ifc.add_argument("--dt-ladder")
    ifc.add_argument("--schemes")
    ifc.add_argument("--region", help="p,q,r")
    dg = sub.add_parser("diagnose", parents=[common], help="collision, cut-off and exit diagnostics")
    dg.add_argument("--upsilon", action="store_true", default=None)
    dg.add_argument("--chi", help="q,Q")
    dg.add_argument("--nbj", help="r")
    dg.add_argument("--kappa", help="q")
    sub.add_parser("fields", parents=[common], help="correlation estimates and the H1 check")
    sub.add_parser("reverse-check", parents=[common], help="Ito, Lyons-Zheng and reversibility checks")
    sub.add_parser("all", parents=[common], help="run every subcommand")
    return parser


FLAG_KEYS = {
    "m": "experiment.m",
    "dt_ladder": "experiment.dt_ladder",
    "schemes": "experiment.schemes",
    "region": "experiment.region",
    "chi": "experiment.chi",
    "nbj": "experiment.nbj",
    "kappa": "experiment.kappa",
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        if args.seed is not None:
            cfg.set("seed", args.seed)
        for attr, key in FLAG_KEYS.items():
            val = getattr(args, attr, None)
            if val is not None:
                cfg.set(key, str(val))
        if getattr(args, "upsilon", None):
            cfg.set("experiment.upsilon", True)
        out = args.out or cfg["output.dir"] or default_out_dir()
        return run_experiment(args.command, cfg, out, max(1, args.workers))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IfcSimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
