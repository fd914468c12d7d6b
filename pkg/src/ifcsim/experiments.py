"""Reusable study pipelines shared by the CLI, the demos and the acceptance suite.

Every function takes a master seed and a member index and derives its own
random stream, so ensembles can be fanned out to worker processes without
changing any result.
"""
from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from .config import Configuration, LabeledState, label
from .ifc import freeze_env, solve_frozen, consistency_error, uniqueness_probe
from .integrator import BrownianPath, SolverConfig, simulate
from .models import BumpPotential, InteractionSpec, Kind
from .rng import make_rng, member_seed
from .sampler import SamplerConfig, dyson_confinement, natural_scale, sample_loggas

__all__ = [
    "dyson_spec",
    "dyson_equilibrium",
    "ginibre_equilibrium",
    "ruelle_spec",
    "ruelle_initial",
    "lattice_initial",
    "consistency_member",
    "uniqueness_member",
    "equilibrium_run",
    "median_order",
]


def dyson_spec(n: int, beta: float = 2.0) -> InteractionSpec:
    """Finite-N Dyson dynamics in unit bulk density units."""
    return InteractionSpec(Kind.SINE_BETA, dim=1, beta=beta, confinement=dyson_confinement(n, beta))


def dyson_equilibrium(n: int, beta: float, seed: int, member: int = 0) -> LabeledState:
    cfg = SamplerConfig(n_particles=n, beta=beta, seed=seed)
    sample = sample_loggas(cfg, "dyson", rng=make_rng(seed, member))
    return label(natural_scale(sample, "dyson", n))


def ginibre_equilibrium(n: int, seed: int, member: int = 0) -> Configuration:
    """Finite-N Ginibre gas at density 1/pi (the units of the GinibreRep2 drift)."""
    cfg = SamplerConfig(n_particles=n, beta=2.0, seed=seed)
    return natural_scale(sample_loggas(cfg, "ginibre", rng=make_rng(seed, member)), "ginibre", n)


def ruelle_spec(dim: int = 2, beta: float = 2.0, confinement: float = 0.5) -> InteractionSpec:
    return InteractionSpec(Kind.RUELLE_COMPACT, dim=dim, beta=beta, pair_potential=BumpPotential(1.0, 1.0),
                           confinement=confinement)


def ruelle_initial(n: int, seed: int, member: int = 0, dim: int = 2, side: float = 3.0) -> LabeledState:
    rng = make_rng(seed, member)
    return label(Configuration(rng.uniform(-side / 2, side / 2, (n, dim)), dim))


def lattice_initial(n: int, dim: int = 1, spacing: float = 1.0, offset: float = 0.0) -> LabeledState:
    """n points on a centered lattice (d = 1) or a row of points (d > 1)."""
    x = (np.arange(n) - (n - 1) / 2.0) * spacing + offset
    pts = np.zeros((n, dim))
    pts[:, 0] = x
    return label(Configuration(pts, dim))


def consistency_member(x0: np.ndarray, spec: InteractionSpec, ladder: Sequence[float], ms: Sequence[int],
                       T: float, seed: int, scheme: str = "euler", finest_factor: int = 256) -> dict:
    """Consistency errors of frozen re-solves against one reference path.

    The reference runs at dt_ref = min(ladder) / 2; each frozen solve at dt
    uses the environment subsampled to dt and the same Brownian increments.
    Noise is stored ``finest_factor`` times finer than dt_ref so near-collisions
    can be resolved by sub-stepping.
    Returns {"errors": {m: [err per dt]}, "exact_full": bool}.
    """
    x0 = np.asarray(x0, dtype=float)
    n, d = x0.shape
    dt_ref = min(ladder) / 2.0
    bp = BrownianPath.generate(n, d, T, dt_ref / finest_factor, seed=seed)
    ref_solver = SolverConfig(scheme=scheme, dt=dt_ref, T=T, seed=seed)
    X, _ = simulate(x0, spec, ref_solver, bp)
    errors = {}
    for m in ms:
        tagged, env = freeze_env(X, m)
        row = []
        for dt in ladder:
            solver = SolverConfig(scheme=scheme, dt=dt, T=T, seed=seed)
            Y = solve_frozen(x0[:m], env, bp.restrict(m), spec, solver)
            row.append(consistency_error(Y, tagged.subsample(dt)))
        errors[m] = row
    tagged, env = freeze_env(X, n)
    Y = solve_frozen(x0, env, bp, spec, ref_solver)
    return {"errors": errors, "exact_full": bool(np.array_equal(Y.positions, X.positions))}


def uniqueness_member(x0: np.ndarray, spec: InteractionSpec, m: int, ladder: Sequence[float], T: float,
                      seed: int, schemes: Sequence[str] = ("euler", "tamed_euler"),
                      finest_factor: int = 256, substep_threshold: Optional[float] = None) -> list:
    """uniqueness_probe between two schemes at each dt of the ladder, all with the same noise.

    The environment comes from a source run at min(ladder) and is subsampled
    to each rung.
    """
    x0 = np.asarray(x0, dtype=float)
    n, d = x0.shape
    dt_min = min(ladder)
    bp = BrownianPath.generate(n, d, T, dt_min / finest_factor, seed=seed)
    X, _ = simulate(x0, spec, SolverConfig(dt=dt_min, T=T, seed=seed), bp)
    _, env = freeze_env(X, m)
    out = []
    for dt in ladder:
        a = SolverConfig(scheme=schemes[0], dt=dt, T=T, seed=seed, min_gap_substep_threshold=substep_threshold)
        b = SolverConfig(scheme=schemes[1], dt=dt, T=T, seed=seed, min_gap_substep_threshold=substep_threshold)
        out.append(uniqueness_probe(x0[:m], env, bp.restrict(m), spec, a, b))
    return out


def equilibrium_run(n: int, beta: float, T: float, dt: float, seed: int, member: int):
    """Dyson equilibrium start plus one simulated path; returns (Trajectory, BrownianPath)."""
    x0 = dyson_equilibrium(n, beta, seed, member)
    spec = dyson_spec(n, beta)
    solver = SolverConfig(dt=dt, T=T, seed=member_seed(seed, member))
    return simulate(x0, spec, solver)


def median_order(dts: Sequence[float], per_member: np.ndarray) -> tuple:
    """(medians per dt, least-squares order of the medians)."""
    med = np.median(np.asarray(per_member), axis=0)
    if np.any(med <= 0):
        return med, math.nan
    slope = float(np.polyfit(np.log(np.asarray(dts)), np.log(med), 1)[0])
    return med, slope
