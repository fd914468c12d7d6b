"""Euler-Maruyama and tamed Euler for N-particle and frozen-environment SDEs.

Noise is generated once at the finest level and aggregated pairwise (a binary
tree of partial sums), so a step of any dyadic size, and each of its halves,
sees exactly the same Brownian increments.  That is what lets solutions at
different step sizes, or with and without a frozen environment, be compared
path by path.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .config import Configuration, LabeledState
from .errors import (
    CollisionAbort,
    DomainViolation,
    IndivisibleFactor,
    InsufficientEnsemble,
)
from .models import InteractionSpec, Kind, system_drift
from .rng import make_rng

__all__ = [
    "SolverConfig",
    "BrownianPath",
    "Trajectory",
    "simulate",
    "integrate",
    "coarsen",
    "MomentFit",
    "moment_bound_probe",
    "observed_order",
    "run_parallel",
    "write_trajectory_csv",
    "read_trajectory_csv",
    "write_brownian_csv",
    "read_brownian_csv",
]

SCHEMES = ("euler", "tamed_euler")
BRIDGE_LEVELS = 24
# kernels that blow up at zero distance; only these trigger gap-driven sub-stepping
SINGULAR_KINDS = {
    Kind.SINE_BETA, Kind.BESSEL, Kind.GINIBRE_REP1, Kind.GINIBRE_REP2, Kind.LENNARD_JONES, Kind.RIESZ,
}


def _log2_exact(ratio: float) -> int:
    k = int(round(math.log2(ratio))) if ratio > 0 else -1
    if k < 0 or abs(ratio - 2.0**k) > 1e-9 * ratio:
        raise IndivisibleFactor(f"ratio {ratio} is not a power of two")
    return k


@dataclass(frozen=True)
class SolverConfig:
    scheme: str = "euler"
    dt: float = 1e-3
    T: float = 1.0
    min_gap_substep_threshold: Optional[float] = None
    max_substep_depth: Optional[int] = None
    collision_abort_gap: float = 1e-8
    seed: int = 0
    finest_factor: int = 16
    label_check: bool = True

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.dt <= 0 or self.T <= 0:
            raise ValueError("dt and T must be positive")
        n = round(self.T / self.dt)
        if n < 1 or abs(n * self.dt - self.T) > 1e-9 * self.T:
            raise ValueError(f"dt={self.dt} does not divide T={self.T}")
        if (self.max_substep_depth is not None and self.max_substep_depth < 0) or self.collision_abort_gap <= 0:
            raise ValueError("substep depth must be >= 0 and abort gap positive")
        _log2_exact(self.finest_factor)

    @property
    def n_steps(self) -> int:
        return round(self.T / self.dt)

    @property
    def substep_threshold(self) -> float:
        if self.min_gap_substep_threshold is not None:
            return self.min_gap_substep_threshold
        return 10.0 * math.sqrt(self.dt)

    def with_dt(self, dt: float) -> "SolverConfig":
        return replace(self, dt=dt)


class _NoiseTree:
    """Stored finest increments, their pairwise aggregates and on-demand bridge refinements."""

    BRIDGE_TAG = 0x0B1D6E

    def __init__(self, increments: np.ndarray, finest_dt: float, seed: int):
        inc = np.array(increments, dtype=float)
        if inc.ndim != 3:
            raise ValueError("increments must have shape (n_steps, N, d)")
        inc.setflags(write=False)
        self.levels = [inc]
        self.finest_dt = float(finest_dt)
        self.seed = int(seed)
        self._bridge: dict = {}

    def level(self, k: int) -> np.ndarray:
        while len(self.levels) <= k:
            prev = self.levels[-1]
            if prev.shape[0] % 2:
                raise IndivisibleFactor("step count not divisible by the requested factor")
            nxt = prev[0::2] + prev[1::2]
            nxt.setflags(write=False)
            self.levels.append(nxt)
        return self.levels[k]

    def node(self, k: int, idx: int) -> np.ndarray:
        """Increment over [idx, idx + 1) * finest_dt * 2**k for every particle; k < 0 uses bridges."""
        if k >= 0:
            return self.level(k)[idx]
        key = (k, idx)
        if key not in self._bridge:
            parent = self.node(k + 1, idx // 2)
            ss = np.random.SeedSequence([self.seed, self.BRIDGE_TAG, -k, idx // 2])
            z = np.random.default_rng(ss).standard_normal(parent.shape)
            h_parent = self.finest_dt * 2.0 ** (k + 1)
            first = 0.5 * parent + 0.5 * math.sqrt(h_parent) * z
            self._bridge[(k, 2 * (idx // 2))] = first
            self._bridge[(k, 2 * (idx // 2) + 1)] = parent - first
        return self._bridge[key]


class BrownianPath:
    """Gaussian increments at the finest stored step, shape (n_fine, N, d), with exact dyadic aggregates.

    Coarser increments are pairwise tree sums of the stored ones, never
    resampled.  Steps below the stored resolution are filled by Brownian
    bridge splits seeded by (seed, level, index), so every solve that shares
    a path also shares its refinements.
    """

    def __init__(self, increments, finest_dt: float, seed: int = 0):
        self._tree = _NoiseTree(increments, finest_dt, seed)
        self._shift = 0
        self._index = slice(None)

    @classmethod
    def generate(cls, n_particles: int, dim: int, T: float, finest_dt: float,
                 seed: int = 0, rng: Optional[np.random.Generator] = None) -> "BrownianPath":
        n = round(T / finest_dt)
        rng = make_rng(seed) if rng is None else rng
        inc = rng.standard_normal((n, n_particles, dim)) * math.sqrt(finest_dt)
        return cls(inc, finest_dt, seed)

    def _view(self, shift: int, index) -> "BrownianPath":
        out = BrownianPath.__new__(BrownianPath)
        out._tree = self._tree
        out._shift = shift
        out._index = index
        return out

    @property
    def seed(self) -> int:
        return self._tree.seed

    @property
    def finest_dt(self) -> float:
        return self._tree.finest_dt * 2.0**self._shift

    @property
    def increments(self) -> np.ndarray:
        return self.level(0)

    @property
    def n_steps(self) -> int:
        return self._tree.levels[0].shape[0] >> self._shift

    @property
    def n_particles(self) -> int:
        return self.increments.shape[1]

    @property
    def dim(self) -> int:
        return self._tree.levels[0].shape[2]

    @property
    def T(self) -> float:
        return self.n_steps * self.finest_dt

    def level(self, k: int) -> np.ndarray:
        """Increments aggregated over 2**k stored steps (pairwise tree sums)."""
        return self._tree.level(k + self._shift)[:, self._index]

    def increment(self, k: int, idx: int) -> np.ndarray:
        """Single increment at level k (negative k: bridge refinement below the stored step)."""
        return self._tree.node(k + self._shift, idx)[self._index]

    def restrict(self, m) -> "BrownianPath":
        """Noise of the first ``m`` particles (or of an index sequence)."""
        sel = np.arange(self._tree.levels[0].shape[1])[self._index]
        sel = sel[:m] if isinstance(m, (int, np.integer)) else sel[np.asarray(m)]
        return self._view(self._shift, sel)

    def truncate(self, T: float) -> "BrownianPath":
        n = round(T / self.finest_dt)
        if n > self.n_steps:
            raise ValueError("noise horizon shorter than requested T")
        return BrownianPath(self.increments[:n], self.finest_dt, self.seed)

    def path(self) -> np.ndarray:
        """Brownian positions at the stored grid, starting at 0."""
        b = np.cumsum(self.increments, axis=0)
        return np.concatenate([np.zeros((1,) + b.shape[1:]), b], axis=0)

    def __eq__(self, other):
        if not isinstance(other, BrownianPath):
            return NotImplemented
        return self.finest_dt == other.finest_dt and np.array_equal(self.increments, other.increments)


def coarsen(bp: BrownianPath, factor: int) -> BrownianPath:
    """Aggregate ``factor`` consecutive increments (factor a power of two) into one."""
    if factor < 1:
        raise IndivisibleFactor("factor must be a positive power of two")
    k = _log2_exact(factor)
    if bp.n_steps % factor:
        raise IndivisibleFactor(f"factor {factor} does not divide {bp.n_steps} steps")
    return bp._view(bp._shift + k, bp._index)


@dataclass
class Trajectory:
    """Positions on a uniform grid in label order, shape (n_times, N, d)."""

    times: np.ndarray
    positions: np.ndarray
    events: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.positions = np.asarray(self.positions, dtype=float)
        if self.positions.ndim != 3 or len(self.times) != len(self.positions):
            raise ValueError("positions must be (n_times, N, d) aligned with times")

    @property
    def n_particles(self) -> int:
        return self.positions.shape[1]

    @property
    def dim(self) -> int:
        return self.positions.shape[2]

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    @property
    def T(self) -> float:
        return float(self.times[-1])

    def state(self, k: int) -> LabeledState:
        return LabeledState(self.positions[k])

    def configuration(self, k: int) -> Configuration:
        return Configuration(self.positions[k], self.dim)

    def particles(self, idx) -> "Trajectory":
        idx = slice(0, idx) if isinstance(idx, (int, np.integer)) else idx
        return Trajectory(self.times, self.positions[:, idx], list(self.events), dict(self.meta))

    def subsample(self, dt: float) -> "Trajectory":
        """Every k-th state so that the grid spacing becomes ``dt``."""
        stride = round(dt / self.dt)
        if stride < 1 or abs(stride * self.dt - dt) > 1e-9 * dt:
            raise ValueError(f"dt={dt} is not a multiple of {self.dt}")
        return Trajectory(self.times[::stride], self.positions[::stride], list(self.events),
                          {**self.meta, "dt": dt})

    def equal_paths(self, other: "Trajectory") -> bool:
        return np.array_equal(self.times, other.times) and np.array_equal(self.positions, other.positions)


# ------------------------------------------------------------------ stepping

def _min_gap(x: np.ndarray, env: Optional[np.ndarray]) -> float:
    m = len(x)
    others = x if env is None or not len(env) else np.concatenate([x, env])
    if len(others) < 2:
        return math.inf
    u = x[:, None, :] - others[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", u, u)
    r2[np.arange(m), np.arange(m)] = np.inf
    return float(np.sqrt(r2.min()))


def _order_signs(x: np.ndarray, env: Optional[np.ndarray]) -> np.ndarray:
    others = x if env is None or not len(env) else np.concatenate([x, env])
    return np.sign(x[:, 0][:, None] - others[:, 0][None, :])


class _Stepper:
    def __init__(self, spec: InteractionSpec, solver: SolverConfig, bp: BrownianPath):
        self.spec = spec
        self.solver = solver
        self.bp = bp
        self.top = _log2_exact(solver.dt / bp.finest_dt)
        # None: the stored levels plus BRIDGE_LEVELS bridge refinements
        self.max_depth = self.top + BRIDGE_LEVELS if solver.max_substep_depth is None else solver.max_substep_depth
        self.singular = spec.kind in SINGULAR_KINDS
        self.tamed = solver.scheme == "tamed_euler"
        self.events: list = []

    def _time(self, lvl: int, idx: int) -> float:
        return idx * (2**lvl) * self.bp.finest_dt

    def _violation(self, x, x_new, env):
        spec = self.spec
        if spec.kind is Kind.BESSEL and np.any(x_new[:, 0] <= 0.0):
            return "domain"
        if spec.preserves_order and not np.array_equal(_order_signs(x, env), _order_signs(x_new, env)):
            return "order"
        if self.singular and _min_gap(x_new, env) < self.solver.collision_abort_gap:
            return "gap"
        return None

    def advance(self, x, env, lvl: int, idx: int, depth: int = 0):
        h = self.bp.finest_dt * 2**lvl
        if self.singular and depth < self.max_depth:
            gap = _min_gap(x, env)
            if gap < self.solver.substep_threshold * math.sqrt(h / self.solver.dt):
                self.events.append(("substep", self._time(lvl, idx), depth + 1, gap))
                x = self.advance(x, env, lvl - 1, 2 * idx, depth + 1)
                return self.advance(x, env, lvl - 1, 2 * idx + 1, depth + 1)
        b = system_drift(x, env, self.spec)
        if self.tamed:
            b = b / (1.0 + h * np.linalg.norm(b, axis=1))[:, None]
        x_new = x + b * h + self.bp.increment(lvl, idx)
        reason = self._violation(x, x_new, env)
        if reason is not None:
            t = self._time(lvl, idx)
            if depth < self.max_depth:
                self.events.append(("refine", t, depth + 1, reason))
                x = self.advance(x, env, lvl - 1, 2 * idx, depth + 1)
                return self.advance(x, env, lvl - 1, 2 * idx + 1, depth + 1)
            self.events.append(("abort", t, depth, reason))
            exc = DomainViolation if reason == "domain" else CollisionAbort
            raise exc(f"{reason} violation at t={t:.6g} after {depth} halvings", t, self.events)
        return x_new


def _label_warnings(prev: np.ndarray, new: np.ndarray, t: float, scale: float, events: list):
    u = prev[:, None, :] - new[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", u, u))
    nearest = dist.argmin(axis=1)
    own = dist[np.arange(len(prev)), np.arange(len(prev))]
    bad = (nearest != np.arange(len(prev))) | (own > scale)
    for i in np.flatnonzero(bad):
        events.append(("label_warning", t, int(i), float(own[i])))


def integrate(x0, env_path, spec: InteractionSpec, solver: SolverConfig, bp: BrownianPath):
    """Integrate the tagged particles ``x0`` with the environment held piecewise constant.

    ``env_path`` is None or an array (n_steps + 1, k, d) on the solver grid;
    returns (positions (n_steps + 1, m, d), events).
    """
    x = np.array(x0, dtype=float)
    n_steps = solver.n_steps
    if bp.n_particles != len(x) or bp.dim != x.shape[1]:
        raise ValueError("Brownian path does not match the particle count/dimension")
    if bp.T < solver.T - 1e-9 * solver.T:
        raise ValueError("Brownian path horizon shorter than T")
    stepper = _Stepper(spec, solver, bp)
    out = np.empty((n_steps + 1,) + x.shape)
    out[0] = x
    scale = 3.0 * math.sqrt(x.shape[1] * solver.dt)
    for n in range(n_steps):
        env = None if env_path is None else env_path[n]
        x_new = stepper.advance(x, env, stepper.top, n)
        if solver.label_check and len(x) > 1:
            _label_warnings(x, x_new, (n + 1) * solver.dt, scale, stepper.events)
        out[n + 1] = x_new
        x = x_new
    return out, stepper.events


def simulate(initial, spec: InteractionSpec, solver: SolverConfig,
             noise: Optional[BrownianPath] = None):
    """Simulate the N-particle system from ``initial`` (a LabeledState or array).

    Returns (Trajectory, BrownianPath).  Without ``noise`` the increments are
    drawn from ``solver.seed`` at step dt / finest_factor.
    """
    x0 = initial.positions if isinstance(initial, LabeledState) else np.asarray(initial, dtype=float)
    if x0.ndim == 1:
        x0 = x0.reshape(-1, 1)
    if x0.shape[1] != spec.dim:
        raise ValueError("initial state dimension does not match the model")
    if noise is None:
        noise = BrownianPath.generate(len(x0), spec.dim, solver.T, solver.dt / solver.finest_factor,
                                      seed=solver.seed)
    pos, events = integrate(x0, None, spec, solver, noise)
    times = np.arange(solver.n_steps + 1) * solver.dt
    meta = {"model": spec.kind.value, "N": len(x0), "dt": solver.dt, "T": solver.T,
            "seed": solver.seed, "scheme": solver.scheme}
    return Trajectory(times, pos, events, meta), noise


def run_parallel(fn: Callable, jobs: Sequence, workers: int = 1) -> list:
    """Map ``fn`` over ``jobs`` in order; results never depend on ``workers``."""
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def observed_order(dts: Sequence[float], errors: Sequence[float]) -> float:
    """Least-squares slope of log(error) against log(dt)."""
    dts = np.asarray(dts, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if len(dts) < 2 or np.any(errors <= 0):
        return float("nan")
    return float(np.polyfit(np.log(dts), np.log(errors), 1)[0])


@dataclass(frozen=True)
class MomentFit:
    slope: float
    constant: float
    lags: np.ndarray
    moments: np.ndarray


def moment_bound_probe(ensemble: Sequence[Trajectory], m: int, a: float,
                       lags: Optional[Sequence[int]] = None, min_members: int = 100) -> MomentFit:
    """Fit log E[|X_t^i - X_u^i|^4 ; sup |X^i| <= a] against log |t - u|.

    Averages over the first ``m`` labels, every start time u on the grid, and
    the ensemble.  ``lags`` are in grid steps (default 1, 2, 4, ... up to an
    eighth of the horizon).
    """
    if len(ensemble) < min_members:
        raise InsufficientEnsemble(f"need at least {min_members} trajectories, got {len(ensemble)}")
    dt = ensemble[0].dt
    n = len(ensemble[0].times) - 1
    if lags is None:
        lags = [2**k for k in range(int(math.log2(max(1, n // 8))) + 1)]
    lags = list(lags)
    if len(lags) < 2:
        raise InsufficientEnsemble("moment regression needs at least two lags")
    sums = np.zeros(len(lags))
    counts = np.zeros(len(lags))
    for traj in ensemble:
        x = traj.positions[:, :m, :]
        keep = np.sqrt(np.einsum("tik,tik->ti", x, x)).max(axis=0) <= a
        for j, lag in enumerate(lags):
            dx = x[lag:] - x[:-lag]
            q = np.einsum("tik,tik->ti", dx, dx) ** 2
            sums[j] += (q * keep[None, :]).sum()
            counts[j] += q.size
    moments = sums / counts
    slope, intercept = np.polyfit(np.log(np.asarray(lags) * dt), np.log(moments), 1)
    return MomentFit(float(slope), float(math.exp(intercept)), np.asarray(lags), moments)


# ------------------------------------------------------------------ CSV files

def _fmt(v: float) -> str:
    return f"{v:.17g}"


def write_trajectory_csv(traj: Trajectory, fh) -> None:
    meta = traj.meta
    fh.write(f"# model={meta.get('model', 'unknown')} N={traj.n_particles} dt={_fmt(traj.dt)} "
             f"T={_fmt(traj.T)} seed={meta.get('seed', 0)}\n")
    for k, t in enumerate(traj.times):
        ts = _fmt(t)
        for i in range(traj.n_particles):
            fh.write(",".join([ts, str(i + 1)] + [_fmt(v) for v in traj.positions[k, i]]) + "\n")


def _read_rows(fh):
    header = fh.readline().strip()
    meta = dict(tok.split("=", 1) for tok in header.lstrip("#").split())
    rows = np.loadtxt(fh, delimiter=",", ndmin=2)
    return meta, rows


def read_trajectory_csv(fh) -> Trajectory:
    meta, rows = _read_rows(fh)
    n = int(meta["N"])
    times = rows[::n, 0]
    pos = rows[:, 2:].reshape(len(times), n, -1)
    parsed = {"model": meta["model"], "N": n, "dt": float(meta["dt"]), "T": float(meta["T"]),
              "seed": int(meta["seed"])}
    return Trajectory(times, pos, [], parsed)


def write_brownian_csv(bp: BrownianPath, fh, model: str = "unknown") -> None:
    fh.write(f"# model={model} N={bp.n_particles} dt={_fmt(bp.finest_dt)} T={_fmt(bp.T)} seed={bp.seed}\n")
    for k in range(bp.n_steps):
        ts = _fmt(k * bp.finest_dt)
        for i in range(bp.n_particles):
            fh.write(",".join([ts, str(i + 1)] + [_fmt(v) for v in bp.increments[k, i]]) + "\n")


def read_brownian_csv(fh) -> BrownianPath:
    meta, rows = _read_rows(fh)
    n = int(meta["N"])
    inc = rows[:, 2:].reshape(-1, n, rows.shape[1] - 2)
    return BrownianPath(inc, float(meta["dt"]), int(meta["seed"]))
