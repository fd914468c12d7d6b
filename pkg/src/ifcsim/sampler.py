"""Initial-condition samplers: Poisson fields, finite-N log-gases, Gibbs fields.

Log-gas samples come from single-site Metropolis chains on the density

    prod_{i<j} |x_i - x_j|^beta * prod_i exp(-N V(x_i))   (times prod x_i^alpha for bessel)

with V normalized so the equilibrium support does not depend on beta:
dyson V = beta x^2 / 4 (semicircle on [-2, 2]), ginibre V = beta |z|^2 / 2
(uniform on the unit disk), bessel V = beta x / 2 (Marchenko-Pastur on [0, 4]).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numba
import numpy as np

from .config import Configuration, label_order
from .errors import MCMCNotMixed
from .rng import make_rng

__all__ = [
    "Window",
    "SamplerConfig",
    "sample_poisson",
    "sample_loggas",
    "sample_loggas_ensemble",
    "unfold_bulk",
    "natural_scale",
    "dyson_confinement",
    "sample_gibbs",
    "loggas_energy_delta",
    "metropolis_acceptance",
    "gibbs_birth_acceptance",
    "gibbs_death_acceptance",
]

KIND_CODES = {"dyson": 0, "ginibre": 1, "bessel": 2}
TARGET_ACCEPTANCE = 0.3
ACCEPTANCE_BAND = (0.1, 0.7)


@dataclass(frozen=True)
class Window:
    """Axis-aligned box ``[lower, upper]`` or a ball of ``radius`` around ``center``."""

    lower: Optional[tuple] = None
    upper: Optional[tuple] = None
    center: Optional[tuple] = None
    radius: Optional[float] = None

    @classmethod
    def box(cls, lower, upper) -> "Window":
        lo = tuple(float(v) for v in np.atleast_1d(lower))
        hi = tuple(float(v) for v in np.atleast_1d(upper))
        return cls(lower=lo, upper=hi)

    @classmethod
    def ball(cls, center, radius: float) -> "Window":
        return cls(center=tuple(float(v) for v in np.atleast_1d(center)), radius=float(radius))

    @property
    def dim(self) -> int:
        return len(self.lower) if self.lower is not None else len(self.center)

    @property
    def volume(self) -> float:
        if self.lower is not None:
            return float(np.prod(np.maximum(np.subtract(self.upper, self.lower), 0.0)))
        d = self.dim
        return math.pi ** (d / 2) / math.gamma(d / 2 + 1) * self.radius**d

    def contains(self, pts: np.ndarray) -> np.ndarray:
        if self.lower is not None:
            return np.all((pts >= self.lower) & (pts <= self.upper), axis=-1)
        diff = pts - np.asarray(self.center)
        return np.einsum("...k,...k->...", diff, diff) <= self.radius**2

    def uniform(self, rng: np.random.Generator, n: int) -> np.ndarray:
        d = self.dim
        if self.lower is not None:
            lo, hi = np.asarray(self.lower), np.asarray(self.upper)
            return lo + (hi - lo) * rng.random((n, d))
        g = rng.standard_normal((n, d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        r = self.radius * rng.random(n) ** (1.0 / d)
        return np.asarray(self.center) + g * r[:, None]


@dataclass(frozen=True)
class SamplerConfig:
    n_particles: int = 16
    window: Optional[Window] = None
    beta: float = 2.0
    alpha: float = 1.0
    intensity: float = 1.0
    mcmc_steps: Optional[int] = None
    mcmc_proposal_scale: Optional[float] = None
    seed: int = 0
    burn_in_per_particle: int = 1000

    def __post_init__(self):
        if self.n_particles < 0:
            raise ValueError("n_particles must be nonnegative")
        if self.mcmc_proposal_scale is not None and self.mcmc_proposal_scale <= 0:
            raise ValueError("proposal scale must be positive")
        if self.mcmc_steps is not None and self.mcmc_steps < self.burn_in_floor:
            raise ValueError(f"mcmc_steps below the burn-in floor {self.burn_in_floor}")

    @property
    def burn_in_floor(self) -> int:
        return self.burn_in_per_particle * max(1, self.n_particles)

    @property
    def steps(self) -> int:
        return self.mcmc_steps if self.mcmc_steps is not None else 2 * self.burn_in_floor


# ---------------------------------------------------------------- Poisson

def sample_poisson(cfg: SamplerConfig, rng: Optional[np.random.Generator] = None) -> Configuration:
    window = cfg.window
    if window is None:
        raise ValueError("sample_poisson needs a window")
    rng = make_rng(cfg.seed) if rng is None else rng
    vol = window.volume
    if vol <= 0:
        return Configuration(np.zeros((0, window.dim)), window.dim)
    n = rng.poisson(cfg.intensity * vol)
    return Configuration(window.uniform(rng, n), window.dim)


# ---------------------------------------------------------------- log-gas

@numba.njit(cache=True)
def _confinement(kind, beta, y):
    if kind == 0:
        return 0.25 * beta * y[0] * y[0]
    if kind == 1:
        return 0.5 * beta * (y[0] * y[0] + y[1] * y[1])
    return 0.5 * beta * y[0]


@numba.njit(cache=True)
def loggas_energy_delta(x, i, y, kind, beta, alpha):
    """Energy change when particle ``i`` of ``x`` moves to ``y``; +inf for bessel y <= 0."""
    n, d = x.shape
    if kind == 2 and y[0] <= 0.0:
        return np.inf
    log_ratio = 0.0
    prod = 1.0
    for j in range(n):
        if j == i:
            continue
        r_new = 0.0
        r_old = 0.0
        for k in range(d):
            a = y[k] - x[j, k]
            b = x[i, k] - x[j, k]
            r_new += a * a
            r_old += b * b
        if r_new == 0.0:
            return np.inf
        prod *= r_new / r_old
        # flush before the running product can leave the normal range
        if prod > 1e100 or prod < 1e-100:
            log_ratio += math.log(prod)
            prod = 1.0
    log_ratio += math.log(prod)
    de = -0.5 * beta * log_ratio
    de += n * (_confinement(kind, beta, y) - _confinement(kind, beta, x[i]))
    if kind == 2:
        de -= alpha * (math.log(y[0]) - math.log(x[i, 0]))
    return de


@numba.njit(cache=True)
def metropolis_acceptance(de):
    if de <= 0.0:
        return 1.0
    return math.exp(-de)


@numba.njit(cache=True)
def _loggas_chain(x, kind, beta, alpha, normals, uniforms, scale, tune_until, tune_every):
    n, d = x.shape
    steps = normals.shape[0]
    y = np.empty(d)
    n_trace = tune_until // tune_every + 1
    trace = np.empty(n_trace)
    n_tr = 0
    acc_window = 0
    acc_after = 0
    for k in range(steps):
        i = k % n
        for c in range(d):
            y[c] = x[i, c] + scale * normals[k, c]
        de = loggas_energy_delta(x, i, y, kind, beta, alpha)
        if uniforms[k] < metropolis_acceptance(de):
            for c in range(d):
                x[i, c] = y[c]
            acc_window += 1
            if k >= tune_until:
                acc_after += 1
        if k < tune_until and (k + 1) % tune_every == 0:
            rate = acc_window / tune_every
            scale *= math.exp(2.0 * (rate - 0.3))
            trace[n_tr] = scale
            n_tr += 1
            acc_window = 0
    return x, scale, acc_after, trace[:n_tr]


def _loggas_start(kind: str, n: int, rng: np.random.Generator) -> np.ndarray:
    u = (np.arange(n) + 0.5) / max(n, 1)
    if kind == "dyson":
        x = -2.0 * np.cos(np.pi * u) * 0.9
        x += 0.01 * rng.standard_normal(n)
        return x.reshape(n, 1)
    if kind == "ginibre":
        r = np.sqrt(rng.random(n)) * 0.95
        th = 2 * np.pi * rng.random(n)
        return np.column_stack([r * np.cos(th), r * np.sin(th)])
    x = 4.0 * u**2 + 0.01 * rng.random(n) + 1e-3
    return x.reshape(n, 1)


def sample_loggas(cfg: SamplerConfig, kind: str, rng: Optional[np.random.Generator] = None,
                  return_info: bool = False):
    """Metropolis sample of the finite-N log-gas (see module docstring for normalizations).

    The returned configuration lists points in label order.  The first half of
    the chain tunes the proposal scale towards acceptance 0.3; acceptance is
    measured on the second half and must land in [0.1, 0.7].
    """
    if kind not in KIND_CODES:
        raise ValueError(f"unknown log-gas kind {kind!r}")
    dim = 2 if kind == "ginibre" else 1
    n = cfg.n_particles
    if n == 0:
        cfg_out = Configuration(np.zeros((0, dim)), dim)
        return (cfg_out, {}) if return_info else cfg_out
    rng = make_rng(cfg.seed) if rng is None else rng
    steps = cfg.steps
    x = _loggas_start(kind, n, rng)
    normals = rng.standard_normal((steps, dim))
    uniforms = rng.random(steps)
    scale = cfg.mcmc_proposal_scale or 1.0 / max(n, 1)
    tune_until = steps // 2
    tune_every = max(100, 10 * n)
    tune_until -= tune_until % tune_every
    x, scale, acc, trace = _loggas_chain(
        x, KIND_CODES[kind], float(cfg.beta), float(cfg.alpha), normals, uniforms,
        float(scale), int(tune_until), int(tune_every),
    )
    rate = acc / max(1, steps - tune_until)
    info = {"acceptance": rate, "proposal_scale": scale, "tuning_trace": trace.tolist()}
    if not ACCEPTANCE_BAND[0] <= rate <= ACCEPTANCE_BAND[1]:
        raise MCMCNotMixed(f"acceptance rate {rate:.3f} outside {ACCEPTANCE_BAND}")
    x = x[label_order(x)]
    cfg_out = Configuration(x, dim)
    return (cfg_out, info) if return_info else cfg_out


def sample_loggas_ensemble(cfg: SamplerConfig, kind: str, size: int) -> list:
    """Independent chains for members 0..size-1, each with its own (seed, member) stream."""
    return [sample_loggas(cfg, kind, rng=make_rng(cfg.seed, k)) for k in range(size)]


def natural_scale(cfg: Configuration, kind: str, n: Optional[int] = None) -> Configuration:
    """Deterministic rescaling from sampler units to the units the drifts assume.

    dyson: unit bulk density (factor N / pi); ginibre: density 1/pi (factor
    sqrt(N)); bessel: hard-edge scale (factor 4 N^2).
    """
    n = len(cfg) if n is None else n
    factor = {"dyson": n / math.pi, "ginibre": math.sqrt(n), "bessel": 4.0 * n * n}[kind]
    return Configuration(cfg.points * factor, cfg.dim)


def dyson_confinement(n: int, beta: float = 2.0) -> float:
    """Harmonic coefficient c making the N-particle Dyson dynamics invariant for the natural-scale gas."""
    return beta * math.pi**2 / (4.0 * n)


def unfold_bulk(cfg: Configuration, kind: str, fraction: float = 0.25) -> Configuration:
    """Rescale so the empirical density at the reference point is one.

    The density is estimated from the ``fraction`` of points closest to the
    reference point (rank-based), which makes the map idempotent: unfolding
    an unfolded configuration leaves it unchanged up to rounding.
    """
    n = len(cfg)
    if n == 0:
        return cfg
    k = max(2, int(round(fraction * n)))
    k = min(k, n)
    pts = cfg.points
    if kind == "dyson":
        xs = np.sort(pts[:, 0])
        i0 = (n - k) // 2
        span = xs[i0 + k - 1] - xs[i0]
        factor = (k - 1) / span
    elif kind == "ginibre":
        r = np.sort(np.sqrt(np.einsum("ij,ij->i", pts, pts)))
        density = k / (math.pi * r[k - 1] ** 2)
        factor = math.sqrt(density)
    elif kind == "bessel":
        xs = np.sort(pts[:, 0])
        factor = (math.pi * (k - 0.5)) ** 2 / xs[k - 1]
    else:
        raise ValueError(f"unknown log-gas kind {kind!r}")
    return Configuration(pts * factor, cfg.dim)


# ---------------------------------------------------------------- Gibbs

def _pair_energy_fn(pair_potential) -> Callable[[np.ndarray], np.ndarray]:
    if hasattr(pair_potential, "value"):
        return lambda u: pair_potential.value(u)
    return lambda u: pair_potential(np.sqrt(np.einsum("ij,ij->i", u, u)))


def gibbs_birth_acceptance(de: float, n: int, mean_count: float) -> float:
    """Acceptance of adding a point to n existing ones (equal birth/death proposal rates)."""
    if not np.isfinite(de):
        return 0.0
    return min(1.0, mean_count / (n + 1) * math.exp(-de))


def gibbs_death_acceptance(de: float, n: int, mean_count: float) -> float:
    """Acceptance of removing one of n points; ``de`` is the energy change of the removal."""
    if n == 0:
        return 0.0
    return min(1.0, n / mean_count * math.exp(-de))


def sample_gibbs(cfg: SamplerConfig, pair_potential, rng: Optional[np.random.Generator] = None,
                 return_info: bool = False):
    """Birth/death/move Metropolis chain for exp(-beta sum Psi0) relative to Poisson on the window.

    ``pair_potential`` is either an object with ``value(u)`` on offset arrays
    or a callable on distance arrays (``inf`` encodes a hard core).
    """
    window = cfg.window
    if window is None:
        raise ValueError("sample_gibbs needs a window")
    rng = make_rng(cfg.seed) if rng is None else rng
    energy = _pair_energy_fn(pair_potential)
    beta = float(cfg.beta)
    z_vol = cfg.intensity * window.volume
    steps = cfg.steps
    d = window.dim
    pts = np.zeros((0, d))
    scale = cfg.mcmc_proposal_scale or 0.5
    tune_until = steps // 2
    tune_every = 200
    moves = acc = moves_after = acc_after = 0
    trace = []
    for k in range(steps):
        n = len(pts)
        u = rng.random()
        if u < 0.25:
            y = window.uniform(rng, 1)[0]
            de = beta * float(np.sum(energy(pts - y))) if n else 0.0
            if rng.random() < gibbs_birth_acceptance(de, n, z_vol):
                pts = np.vstack([pts, y])
        elif u < 0.5:
            if n:
                i = rng.integers(n)
                rest = np.delete(pts, i, axis=0)
                de = -beta * float(np.sum(energy(rest - pts[i]))) if n > 1 else 0.0
                if rng.random() < gibbs_death_acceptance(de, n, z_vol):
                    pts = rest
        elif n:
            i = rng.integers(n)
            y = pts[i] + scale * rng.standard_normal(d)
            ok = False
            if window.contains(y[None, :])[0]:
                rest = np.delete(pts, i, axis=0)
                if len(rest):
                    de = beta * float(np.sum(energy(rest - y)) - np.sum(energy(rest - pts[i])))
                else:
                    de = 0.0
                ok = bool(np.isfinite(de)) and rng.random() < metropolis_acceptance(de)
                if ok:
                    pts = pts.copy()
                    pts[i] = y
            moves += 1
            acc += ok
            if k >= tune_until:
                moves_after += 1
                acc_after += ok
            if k < tune_until and moves >= tune_every:
                scale *= math.exp(2.0 * (acc / moves - TARGET_ACCEPTANCE))
                trace.append(scale)
                moves = acc = 0
    rate = acc_after / moves_after if moves_after else float("nan")
    info = {"acceptance": rate, "proposal_scale": scale, "tuning_trace": trace}
    if moves_after and not ACCEPTANCE_BAND[0] <= rate <= ACCEPTANCE_BAND[1]:
        raise MCMCNotMixed(f"move acceptance {rate:.3f} outside {ACCEPTANCE_BAND}")
    out = Configuration(pts, d)
    return (out, info) if return_info else out
