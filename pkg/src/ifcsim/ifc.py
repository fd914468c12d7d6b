"""The IFC scheme: freeze the tail as an environment, re-solve the tagged particles.

``freeze_env`` splits a trajectory into the first m labels and the environment
path of the remaining ones; ``solve_frozen`` integrates the m-particle system
against that path with the same Brownian increments.  The probes measure how
far the re-solved paths sit from the originals and from each other, and scan
trajectories for exits from the regions H_{p,q,r}.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import Configuration, TameSchedule, ball_counts, is_simple, tame_level
from .errors import DegeneratePair, GridMismatch, IndexOutOfRange
from .integrator import BrownianPath, SolverConfig, Trajectory, integrate
from .models import InteractionSpec, system_drift
from .rng import make_rng

__all__ = [
    "FrozenEnvironment",
    "HRegion",
    "ExitTime",
    "B1Report",
    "freeze_env",
    "solve_frozen",
    "consistency_error",
    "uniqueness_probe",
    "exit_time_sigma",
    "b1_report",
    "minimal_region",
    "lipschitz_modulus_probe",
]


@dataclass(frozen=True)
class FrozenEnvironment:
    """Positions of the untagged particles on a time grid, shape (n_times, k, d)."""

    times: np.ndarray
    positions: np.ndarray

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    def state(self, k: int) -> Configuration:
        return Configuration(self.positions[k], self.positions.shape[2])

    @property
    def env_states(self) -> list:
        return [self.state(k) for k in range(len(self.times))]

    def on_grid(self, dt: float, n_steps: int) -> np.ndarray:
        """Environment values at 0, dt, ..., n_steps*dt (subsampled, never interpolated)."""
        if self.dt == 0.0:
            if n_steps == 0:
                return self.positions[:1]
            raise GridMismatch("environment holds a single time but the solve needs more")
        stride = round(dt / self.dt)
        if stride < 1 or abs(stride * self.dt - dt) > 1e-9 * dt:
            raise GridMismatch(f"solver dt={dt} is not a multiple of environment dt={self.dt}")
        if n_steps * stride >= len(self.times):
            raise GridMismatch("environment path shorter than the solver horizon")
        return self.positions[: n_steps * stride + 1 : stride]

    @classmethod
    def static(cls, points, n_steps: int, dt: float) -> "FrozenEnvironment":
        """A pinned environment repeated over ``n_steps`` grid steps."""
        pts = np.asarray(points, dtype=float)
        pts = pts.reshape(len(pts), -1) if pts.size else pts.reshape(0, pts.shape[-1] if pts.ndim > 1 else 1)
        times = np.arange(n_steps + 1) * dt
        return cls(times, np.broadcast_to(pts, (n_steps + 1,) + pts.shape))


def freeze_env(traj: Trajectory, m: int):
    """Split ``traj`` into the tagged path of labels 1..m and the frozen environment."""
    if not 0 <= m <= traj.n_particles:
        raise IndexOutOfRange(f"m={m} outside [0, {traj.n_particles}]")
    tagged = Trajectory(traj.times, traj.positions[:, :m], list(traj.events), {**traj.meta, "m": m})
    return tagged, FrozenEnvironment(traj.times, traj.positions[:, m:])


def solve_frozen(tagged0, env: FrozenEnvironment, bp_m: BrownianPath, spec: InteractionSpec,
                 solver: SolverConfig) -> Trajectory:
    """Integrate the m tagged particles with the environment held at left grid values."""
    x0 = np.asarray(tagged0, dtype=float).reshape(-1, spec.dim)
    env_path = env.on_grid(solver.dt, solver.n_steps)
    pos, events = integrate(x0, env_path, spec, solver, bp_m)
    times = np.arange(solver.n_steps + 1) * solver.dt
    meta = {"model": spec.kind.value, "N": len(x0), "dt": solver.dt, "T": solver.T,
            "seed": solver.seed, "scheme": solver.scheme}
    return Trajectory(times, pos, events, meta)


def consistency_error(Y: Trajectory, X_tagged: Trajectory) -> float:
    """sup over grid times and particles of the Euclidean distance |Y - X|."""
    if Y.positions.shape != X_tagged.positions.shape or not np.allclose(
        Y.times, X_tagged.times, rtol=0, atol=1e-9 * max(1.0, float(Y.times[-1]))
    ):
        raise GridMismatch("trajectories are not on the same grid or particle set")
    if Y.positions.shape[1] == 0:
        return 0.0
    diff = Y.positions - X_tagged.positions
    return float(np.sqrt(np.einsum("tik,tik->ti", diff, diff)).max())


def uniqueness_probe(tagged0, env: FrozenEnvironment, bp_m: BrownianPath, spec: InteractionSpec,
                     solver_a: SolverConfig, solver_b: SolverConfig) -> float:
    """Sup distance between two frozen solves driven by the same noise, on the coarser grid."""
    ya = solve_frozen(tagged0, env, bp_m, spec, solver_a)
    yb = solve_frozen(tagged0, env, bp_m, spec, solver_b)
    dt = max(solver_a.dt, solver_b.dt)
    return consistency_error(ya.subsample(dt), yb.subsample(dt))


# ------------------------------------------------------------------ regions H_{p,q,r}

@dataclass(frozen=True)
class HRegion:
    p: int
    q: int
    r: int
    schedule: TameSchedule

    def __post_init__(self):
        if min(self.p, self.q, self.r) < 1:
            raise ValueError("p, q, r must be positive integers")

    def env_tame(self, env: Configuration) -> bool:
        radii = list(self.schedule.radii(env))
        counts = ball_counts(env, radii, closed=True)
        return all(c <= self.schedule.a(self.q + 1, r) for c, r in zip(counts, radii))

    def contains(self, tagged: np.ndarray, env: Configuration) -> bool:
        tagged = np.asarray(tagged, dtype=float).reshape(-1, env.dim)
        if len(tagged) and np.einsum("ij,ij->i", tagged, tagged).max() >= self.r**2:
            return False
        floor = 2.0 ** (-self.p)
        if _tagged_gap(tagged, env.points) <= floor:
            return False
        if not is_simple(Configuration(np.vstack([tagged, env.points]), env.dim)):
            return False
        return self.env_tame(env)


def _tagged_gap(tagged: np.ndarray, env_pts: np.ndarray) -> float:
    """Smallest distance from a tagged point to any other tagged or environment point."""
    m = len(tagged)
    if m == 0:
        return math.inf
    others = np.vstack([tagged, env_pts]) if len(env_pts) else tagged
    u = tagged[:, None, :] - others[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", u, u)
    d2[np.arange(m), np.arange(m)] = np.inf
    return float(np.sqrt(d2.min())) if d2.size else math.inf


@dataclass(frozen=True)
class ExitTime:
    """First grid time outside a region; ``time is None`` marks a censored (never exiting) path."""

    time: Optional[float]
    index: Optional[int] = None

    @property
    def censored(self) -> bool:
        return self.time is None

    def value(self) -> float:
        return math.inf if self.time is None else self.time


CENSORED = ExitTime(None, None)


def exit_time_sigma(traj_m: Trajectory, env: FrozenEnvironment, region: HRegion) -> ExitTime:
    if len(env.times) != len(traj_m.times):
        raise GridMismatch("tagged path and environment must share the time grid")
    for k, t in enumerate(traj_m.times):
        if not region.contains(traj_m.positions[k], env.state(k)):
            return ExitTime(float(t), k)
    return CENSORED


def minimal_region(tagged: np.ndarray, env: Configuration, schedule: TameSchedule,
                   ceiling: int = 64) -> Optional[tuple]:
    """Smallest (p, q, r) with the state in H_{p,q,r}, or None when no triple works."""
    tagged = np.asarray(tagged, dtype=float).reshape(-1, env.dim)
    if not is_simple(Configuration(np.vstack([tagged, env.points]), env.dim)):
        return None
    gap = _tagged_gap(tagged, env.points)
    p = 1 if math.isinf(gap) else max(1, math.floor(-math.log2(gap)) + 1)
    while 2.0 ** (-p) >= gap:
        p += 1
    level = tame_level(env, schedule, ceiling)
    if math.isinf(level):
        return None
    q = max(1, level - 1)
    rmax = float(np.sqrt(np.einsum("ij,ij->i", tagged, tagged).max())) if len(tagged) else 0.0
    r = math.floor(rmax) + 1
    return p, q, r


@dataclass(frozen=True)
class B1Report:
    p: int
    q: int
    r: int
    uncovered_fraction: float
    per_step: list

    @property
    def holds(self) -> bool:
        return self.uncovered_fraction == 0.0


def b1_report(traj: Trajectory, m: int, schedule: TameSchedule, p_max: int, q_max: int,
              r_max: int) -> B1Report:
    """Per step the minimal (p, q, r) within the caps; the report keeps the maxima."""
    if min(p_max, q_max, r_max) < 1:
        raise ValueError("caps must be positive")
    tagged_path, env = freeze_env(traj, m)
    per_step = []
    uncovered = 0
    best = [0, 0, 0]
    for k in range(len(traj.times)):
        triple = minimal_region(tagged_path.positions[k], env.state(k), schedule)
        if triple is None or triple[0] > p_max or triple[1] > q_max or triple[2] > r_max:
            uncovered += 1
            per_step.append(None)
            continue
        per_step.append(triple)
        best = [max(b, v) for b, v in zip(best, triple)]
    return B1Report(best[0], best[1], best[2], uncovered / len(traj.times), per_step)


# ------------------------------------------------------------------ Lipschitz probe

def _same_component(x, y, env_pts, floor: float, r: float, samples: int = 16) -> bool:
    if x.shape[1] == 1:
        allx = np.concatenate([x[:, 0], env_pts[:, 0]])
        ally = np.concatenate([y[:, 0], env_pts[:, 0]])
        if not np.array_equal(np.argsort(allx, kind="stable"), np.argsort(ally, kind="stable")):
            return False
    for s in np.linspace(0.0, 1.0, samples + 1):
        z = (1 - s) * x + s * y
        if np.einsum("ij,ij->i", z, z).max() >= r * r or _tagged_gap(z, env_pts) <= floor:
            return False
    return True


def lipschitz_modulus_probe(spec: InteractionSpec, region: HRegion, env_sample: Configuration,
                            n_pairs: int, m: int = 1, seed: int = 0, tol: float = 1e-12,
                            max_tries: int = 100_000) -> float:
    """Largest sampled |b^m(x, env) - b^m(y, env)| / |x - y| over same-component pairs in the region.

    x is drawn uniformly in the ball S_r (rejecting states outside the region)
    and y = x + a random displacement at most a quarter of the gap floor.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be at least 1")
    rng = make_rng(seed)
    env_pts = env_sample.points
    floor = 2.0 ** (-region.p)
    d = spec.dim
    best = 0.0
    found = 0
    for _ in range(max_tries):
        if found >= n_pairs:
            break
        g = rng.standard_normal((m, d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        x = g * region.r * rng.random((m, 1)) ** (1.0 / d)
        if not region.contains(x, env_sample):
            continue
        step = rng.standard_normal((m, d))
        step *= 0.25 * floor * rng.random() / np.linalg.norm(step)
        y = x + step
        if not _same_component(x, y, env_pts, floor, region.r):
            continue
        dist = float(np.linalg.norm(y - x))
        if dist < tol:
            raise DegeneratePair(f"sampled pair distance {dist} below tolerance")
        bx = system_drift(x, env_pts, spec)
        by = system_drift(y, env_pts, spec)
        best = max(best, float(np.linalg.norm(bx - by)) / dist)
        found += 1
    if found == 0:
        raise DegeneratePair("no admissible pair found inside the region")
    return best
