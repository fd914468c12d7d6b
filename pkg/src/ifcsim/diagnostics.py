"""Non-collision and non-exit diagnostics.

The Lyapunov pair used for gaps is
    Upsilon(t) = 1 - ln t (t <= 1),  exp(1 - t) (t > 1)
    upsilon(t) = t        (t <= 1),  exp(t - 1) (t > 1)
so that upsilon = -1 / Upsilon' and 1/upsilon is not integrable at 0.

The cut-off chi_{q,Q} = theta(d_{q,Q}) measures how far a configuration sits
outside the tame set K_Q[a_q]; theta is a linear ramp smoothed by a bump.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import cumulative_simpson, quad
from scipy.interpolate import CubicHermiteSpline

from .config import Configuration, TameSchedule, ball_counts, default_schedule, is_simple, label_order
from .errors import NonPositiveArgument, NonSimpleConfiguration
from .ifc import CENSORED, ExitTime
from .integrator import Trajectory

__all__ = [
    "upsilon",
    "upsilon_small",
    "upsilon_prime",
    "upsilon_second",
    "Theta",
    "CutoffParams",
    "CollisionReport",
    "collision_monitor",
    "nbj_counter",
    "cutoff_distance",
    "cutoff_chi",
    "chi_gradient",
    "chi_coordinate",
    "carre_du_champ_chi",
    "kappa_exit",
    "kappa_infinity",
]


# ------------------------------------------------------------------ Lyapunov pair

def _positive(t):
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise NonPositiveArgument("Upsilon is defined for t > 0 only")
    return t


def upsilon(t):
    t = _positive(t)
    out = np.where(t <= 1.0, 1.0 - np.log(np.minimum(t, 1.0)), np.exp(1.0 - np.maximum(t, 1.0)))
    return float(out) if out.ndim == 0 else out


def upsilon_prime(t):
    t = _positive(t)
    out = np.where(t <= 1.0, -1.0 / np.minimum(t, 1.0), -np.exp(1.0 - np.maximum(t, 1.0)))
    return float(out) if out.ndim == 0 else out


def upsilon_second(t):
    t = _positive(t)
    out = np.where(t <= 1.0, 1.0 / np.minimum(t, 1.0) ** 2, np.exp(1.0 - np.maximum(t, 1.0)))
    return float(out) if out.ndim == 0 else out


def upsilon_small(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise NonPositiveArgument("upsilon is defined for t >= 0 only")
    out = np.where(t <= 1.0, t, np.exp(np.maximum(t, 1.0) - 1.0))
    return float(out) if out.ndim == 0 else out


# ------------------------------------------------------------------ theta

class Theta:
    """Clamped linear ramp on [eps + w, 1 - eps - w] convolved with a C-infinity bump of radius w.

    With Phi the bump's distribution function and G its integral,
    theta(t) = (G(t - lo) - G(t - hi)) / (hi - lo) and theta' uses Phi.
    """

    def __init__(self, epsilon: float = 0.05, width: float = 0.04, nodes: int = 20001):
        if not (0 < width and 0 < epsilon and epsilon + 2 * width < 0.5):
            raise ValueError("need 0 < width, 0 < epsilon and epsilon + 2*width < 1/2")
        self.epsilon = epsilon
        self.width = width
        self.lo = epsilon + width
        self.hi = 1.0 - epsilon - width
        w = width

        def bump(s):
            z = np.clip(s / w, -1.0, 1.0)
            inside = np.abs(z) < 1.0
            return np.where(inside, np.exp(-1.0 / np.where(inside, 1.0 - z * z, 1.0)), 0.0)

        mass = quad(lambda s: float(bump(np.array(s))), -w, w, epsabs=1e-15, epsrel=1e-13)[0]
        s = np.linspace(-w, w, nodes)
        rho = bump(s) / mass
        phi = cumulative_simpson(rho, x=s, initial=0.0)
        phi /= phi[-1]
        g = cumulative_simpson(phi, x=s, initial=0.0)
        # G(w) = w exactly for a symmetric bump; absorb the quadrature residue
        g += (w - g[-1]) * (s + w) / (2 * w)
        self._phi = CubicHermiteSpline(s, phi, rho)
        self._g = CubicHermiteSpline(s, g, phi)
        self._rho = rho
        self._s = s
        grid = np.linspace(-0.1, 1.1, 100_001)
        slope = np.abs(self.derivative(grid))
        if slope.max() > math.sqrt(2.0):
            raise ValueError("theta slope exceeds sqrt(2)")

    def _G(self, s):
        s = np.asarray(s, dtype=float)
        w = self.width
        return np.where(s <= -w, 0.0, np.where(s >= w, s, self._g(np.clip(s, -w, w))))

    def _Phi(self, s):
        s = np.asarray(s, dtype=float)
        w = self.width
        return np.where(s <= -w, 0.0, np.where(s >= w, 1.0, self._phi(np.clip(s, -w, w))))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = (self._G(t - self.lo) - self._G(t - self.hi)) / (self.hi - self.lo)
        out = np.clip(out, 0.0, 1.0)
        out = np.where(t >= self.hi + self.width, 1.0, np.where(t <= self.lo - self.width, 0.0, out))
        return float(out) if out.ndim == 0 else out

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        out = (self._Phi(t - self.lo) - self._Phi(t - self.hi)) / (self.hi - self.lo)
        return float(out) if out.ndim == 0 else out

    @property
    def max_slope(self) -> float:
        return 1.0 / (self.hi - self.lo)


@functools.lru_cache(maxsize=8)
def _theta(epsilon: float, width: float) -> Theta:
    return Theta(epsilon, width)


@dataclass(frozen=True)
class CutoffParams:
    epsilon: float = 0.05
    mollifier_width: float = 0.04
    schedule: TameSchedule = field(default_factory=lambda: default_schedule(1))
    Q: int = 1

    def __post_init__(self):
        if self.Q < 1:
            raise ValueError("Q must be a positive integer")

    @property
    def theta(self) -> Theta:
        return _theta(self.epsilon, self.mollifier_width)


# ------------------------------------------------------------------ chi

def _check_simple(cfg: Configuration):
    if not is_simple(cfg, 0.0):
        raise NonSimpleConfiguration("cut-off functions need a simple configuration")


def _violations(cfg: Configuration, q: int, params: CutoffParams):
    """(label-order permutation, moduli, list of (r, 0-based sorted indices in J_r))."""
    order = label_order(cfg.points)
    mod = np.sqrt(np.einsum("ij,ij->i", cfg.points, cfg.points))[order]
    terms = []
    for r in range(1, params.Q + 1):
        a = params.schedule.a(q, r)
        inside = np.flatnonzero(mod < r)
        idx = inside[inside >= a]  # sorted index k is label k + 1 > a
        if len(idx):
            terms.append((r, idx))
    return order, mod, terms


def cutoff_distance(cfg: Configuration, q: int, params: CutoffParams) -> float:
    """d_{q,Q}: root of the summed squared depths of the points beyond a_q(r) inside S_r."""
    _check_simple(cfg)
    _, mod, terms = _violations(cfg, q, params)
    total = 0.0
    for r, idx in terms:
        total += float(np.sum((r - mod[idx]) ** 2))
    return math.sqrt(total)


def cutoff_chi(cfg: Configuration, q: int, params: CutoffParams) -> float:
    return float(params.theta(cutoff_distance(cfg, q, params)))


def chi_gradient(cfg: Configuration, q: int, params: CutoffParams) -> np.ndarray:
    """Gradient of chi_{q,Q} with respect to each point, in the order of ``cfg.points``."""
    _check_simple(cfg)
    order, mod, terms = _violations(cfg, q, params)
    grad_sorted = np.zeros_like(cfg.points)
    pts = cfg.points[order]
    total = 0.0
    for r, idx in terms:
        depth = r - mod[idx]
        total += float(np.sum(depth**2))
        unit = pts[idx] / np.where(mod[idx] > 0, mod[idx], 1.0)[:, None]
        grad_sorted[idx] -= depth[:, None] * unit
    d = math.sqrt(total)
    if d == 0.0:
        return np.zeros_like(cfg.points)
    grad_sorted *= params.theta.derivative(d) / d
    grad = np.empty_like(grad_sorted)
    grad[order] = grad_sorted
    return grad


def chi_coordinate(cfg: Configuration, N_levels: int, params: CutoffParams) -> float:
    """chi~^N_Q = sum over q = 1..N_levels of chi_{q,Q}."""
    return float(sum(cutoff_chi(cfg, q, params) for q in range(1, N_levels + 1)))


def carre_du_champ_chi(cfg: Configuration, q: int, params: CutoffParams, coordinate: bool = False) -> float:
    """(1/2) sum_i |grad_i f|^2 for f = chi_{q,Q}, or f = chi~^q_Q when ``coordinate`` is set."""
    if coordinate:
        grad = sum(chi_gradient(cfg, k, params) for k in range(1, q + 1))
    else:
        grad = chi_gradient(cfg, q, params)
    return 0.5 * float(np.sum(grad * grad))


# ------------------------------------------------------------------ trajectory scans

@dataclass(frozen=True)
class CollisionReport:
    min_gaps: list
    upsilon_start: float
    upsilon_end: float
    n_flags: int
    empty: bool


def _min_gap_in_ball(pts: np.ndarray, R: float) -> float:
    inside = pts[np.einsum("ij,ij->i", pts, pts) <= R * R] if math.isfinite(R) else pts
    n = len(inside)
    if n < 2:
        return math.inf
    if inside.shape[1] == 1:
        return float(np.diff(np.sort(inside[:, 0])).min())
    u = inside[:, None, :] - inside[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", u, u)
    d2[np.diag_indices(n)] = np.inf
    return float(np.sqrt(d2.min()))


def collision_monitor(trajs, R: float = math.inf, abort_gap: float = 1e-8) -> CollisionReport:
    """Minimal gap inside S_R per time, and the ensemble mean of Upsilon(min gap) at 0 and T.

    ``trajs`` is a Trajectory or a sequence of them.
    """
    if isinstance(trajs, Trajectory):
        trajs = [trajs]
    gaps = [np.array([_min_gap_in_ball(p, R) for p in tr.positions]) for tr in trajs]
    flags = sum(int(np.count_nonzero(g < abort_gap)) for g in gaps)
    starts = np.array([g[0] for g in gaps])
    ends = np.array([g[-1] for g in gaps])
    finite = np.isfinite(starts) & np.isfinite(ends)
    if not finite.any():
        return CollisionReport(gaps, math.nan, math.nan, flags, True)
    # a committed zero gap is already flagged; keep Upsilon finite for the mean
    tiny = np.finfo(float).tiny
    u0 = float(np.mean(upsilon(np.maximum(starts[finite], tiny))))
    u1 = float(np.mean(upsilon(np.maximum(ends[finite], tiny))))
    return CollisionReport(gaps, u0, u1, flags, False)


def nbj_counter(traj: Trajectory, r: float, T: Optional[float] = None) -> int:
    """Smallest m such that every label > m (labels by initial modulus) stays outside S_r up to T."""
    T = traj.T if T is None else T
    if T > traj.T + 1e-12:
        raise ValueError("T beyond the trajectory horizon")
    upto = traj.times <= T + 1e-12
    pos = traj.positions[upto]
    order = label_order(pos[0])
    mods = np.sqrt(np.einsum("tik,tik->ti", pos, pos))[:, order]
    entered = np.flatnonzero(mods.min(axis=0) <= r)
    return int(entered.max() + 1) if len(entered) else 0


def kappa_exit(traj: Trajectory, q: int, schedule: TameSchedule) -> ExitTime:
    """First grid time at which the configuration leaves K[a_q]."""
    if q < 1:
        raise ValueError("q must be >= 1")
    for k, t in enumerate(traj.times):
        cfg = traj.configuration(k)
        radii = list(schedule.radii(cfg))
        counts = ball_counts(cfg, radii, closed=True)
        if any(c > schedule.a(q, r) for c, r in zip(counts, radii)):
            return ExitTime(float(t), k)
    return CENSORED


def kappa_infinity(traj: Trajectory, schedule: TameSchedule, q_ladder: Sequence[int]) -> ExitTime:
    """Estimate of kappa_infinity: the latest exit over the q ladder (censored if any is)."""
    exits = [kappa_exit(traj, q, schedule) for q in q_ladder]
    if any(e.censored for e in exits):
        return CENSORED
    return max(exits, key=lambda e: e.time)
