"""Martingale structure along simulated paths and time-reversal tests.

For a smooth F of the labeled state, F(w_t) - F(w_0) = M_t + int_0^t G(w_u) du
with G = sum_i (b_i, grad_i F) + (1/2) Laplacian F for identity diffusion.
The residuals below compare the two sides along a discretized path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import ks_2samp

from .errors import CollisionTooClose, GridMismatch, InsufficientEnsemble
from .integrator import SINGULAR_KINDS, BrownianPath, Trajectory, _log2_exact
from .models import COLLISION_TOL, InteractionSpec, system_drift

__all__ = [
    "CylinderFunction",
    "reverse_path",
    "ito_residual_path",
    "ito_residual",
    "lyons_zheng_residual_path",
    "lyons_zheng_residual",
    "QVResult",
    "qv_check",
    "reversibility_test",
    "increment_statistic",
]


@dataclass(frozen=True)
class CylinderFunction:
    """F on labeled states (N, d) with its gradient (N, d) and Laplacian; depends on finitely many labels."""

    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    laplacian: Callable[[np.ndarray], float]
    labels: tuple = ()
    support_radius: float = math.inf

    @classmethod
    def coordinate(cls, i: int = 0, k: int = 0) -> "CylinderFunction":
        """F = x_i^k (0-based label i, coordinate k)."""
        def grad(x):
            g = np.zeros_like(x)
            g[i, k] = 1.0
            return g
        return cls(lambda x: float(x[i, k]), grad, lambda x: 0.0, (i,))

    @classmethod
    def square(cls, i: int = 0, k: int = 0) -> "CylinderFunction":
        def grad(x):
            g = np.zeros_like(x)
            g[i, k] = 2.0 * x[i, k]
            return g
        return cls(lambda x: float(x[i, k] ** 2), grad, lambda x: 2.0, (i,))

    @classmethod
    def constant(cls, c: float = 1.0) -> "CylinderFunction":
        return cls(lambda x: float(c), np.zeros_like, lambda x: 0.0, ())

    @classmethod
    def gap_gaussian(cls, i: int = 0, j: int = 1, scale: float = 1.0) -> "CylinderFunction":
        """F = exp(-g^2 / (2 scale^2)) with g = x_j - x_i (d = 1)."""
        s2 = scale * scale

        def value(x):
            g = x[j, 0] - x[i, 0]
            return float(math.exp(-g * g / (2 * s2)))

        def grad(x):
            g = x[j, 0] - x[i, 0]
            f = math.exp(-g * g / (2 * s2))
            out = np.zeros_like(x)
            out[j, 0] = -g / s2 * f
            out[i, 0] = g / s2 * f
            return out

        def lap(x):
            g = x[j, 0] - x[i, 0]
            f = math.exp(-g * g / (2 * s2))
            return float(2.0 * (g * g / s2 - 1.0) / s2 * f)

        return cls(value, grad, lap, (i, j))


def reverse_path(traj: Trajectory, T: Optional[float] = None) -> Trajectory:
    """The path t -> w(T - t) on [0, T]."""
    T = traj.T if T is None else T
    k = round(T / traj.dt) if traj.dt > 0 else 0
    if k >= len(traj.times) or abs(traj.times[k] - T) > 1e-9 * max(1.0, T):
        raise GridMismatch(f"T={T} is not a grid time of the trajectory")
    return Trajectory(traj.times[: k + 1], traj.positions[k::-1] if k else traj.positions[:1],
                      [], {**traj.meta, "reversed": True})


def _increments(traj: Trajectory, bp: BrownianPath) -> np.ndarray:
    lvl = _log2_exact(traj.dt / bp.finest_dt)
    inc = bp.level(lvl)
    n = len(traj.times) - 1
    if inc.shape[0] < n or inc.shape[1:] != traj.positions.shape[1:]:
        raise GridMismatch("Brownian path does not cover the trajectory")
    return inc[:n]


def _check_gaps(F: CylinderFunction, traj: Trajectory, spec: Optional[InteractionSpec]):
    """Singular drifts are only evaluated away from collisions of the labels F depends on."""
    if spec is None or spec.kind not in SINGULAR_KINDS or not F.labels or traj.n_particles < 2:
        return
    x = traj.positions
    for i in F.labels:
        d = x - x[:, i : i + 1, :]
        d2 = np.einsum("tjk,tjk->tj", d, d)
        d2[:, i] = np.inf
        if d2.min() < COLLISION_TOL**2:
            raise CollisionTooClose(f"label {i + 1} came within the collision tolerance")


def _generator(F: CylinderFunction, x: np.ndarray, spec: InteractionSpec) -> float:
    b = system_drift(x, None, spec)
    return float(np.sum(b * F.gradient(x))) + 0.5 * F.laplacian(x)


def ito_residual_path(F: CylinderFunction, traj: Trajectory, bp: BrownianPath,
                      spec: InteractionSpec) -> np.ndarray:
    """F(w_t) - F(w_0) - int G du minus the stochastic sum of grad F . dB, per grid time."""
    _check_gaps(F, traj, spec)
    inc = _increments(traj, bp)
    dt = traj.dt
    x = traj.positions
    n = len(traj.times) - 1
    fvals = np.array([F.value(x[k]) for k in range(n + 1)])
    dm = np.array([float(np.sum(F.gradient(x[k]) * inc[k])) for k in range(n)])
    gvals = np.array([_generator(F, x[k], spec) for k in range(n)])
    m_stoch = np.concatenate([[0.0], np.cumsum(dm)])
    m_path = fvals - fvals[0] - np.concatenate([[0.0], np.cumsum(gvals * dt)])
    return m_path - m_stoch


def ito_residual(F: CylinderFunction, traj: Trajectory, bp: BrownianPath, spec: InteractionSpec) -> float:
    return float(np.abs(ito_residual_path(F, traj, bp, spec)).max())


def lyons_zheng_residual_path(F: CylinderFunction, traj: Trajectory, bp: BrownianPath,
                              spec: InteractionSpec, T: Optional[float] = None) -> np.ndarray:
    """F(w_t) - F(w_0) - (1/2)(M_t + M~_{T-t} - M~_T) on the grid up to T.

    M is the forward stochastic sum; M~ is built pathwise on the reversed path
    as F differences minus left-point G integrals.
    """
    T = traj.T if T is None else T
    rev = reverse_path(traj, T)
    k = len(rev.times) - 1
    fwd = Trajectory(traj.times[: k + 1], traj.positions[: k + 1], [], traj.meta)
    _check_gaps(F, fwd, spec)
    inc = _increments(fwd, bp)
    dt = traj.dt
    x = fwd.positions
    fvals = np.array([F.value(x[j]) for j in range(k + 1)])
    gvals = np.array([_generator(F, x[j], spec) for j in range(k + 1)])
    dm = np.array([float(np.sum(F.gradient(x[j]) * inc[j])) for j in range(k)])
    m_fwd = np.concatenate([[0.0], np.cumsum(dm)])
    # reversed path: w~_s = w_{T-s}, so its values and G are the forward arrays read backwards
    f_rev = fvals[::-1]
    g_rev = gvals[::-1]
    m_rev = f_rev - f_rev[0] - np.concatenate([[0.0], np.cumsum(g_rev[:-1] * dt)])
    idx = np.arange(k + 1)
    return fvals - fvals[0] - 0.5 * (m_fwd + m_rev[k - idx] - m_rev[k])


def lyons_zheng_residual(F: CylinderFunction, traj: Trajectory, bp: BrownianPath,
                         spec: InteractionSpec, T: Optional[float] = None) -> float:
    return float(np.abs(lyons_zheng_residual_path(F, traj, bp, spec, T)).max())


@dataclass(frozen=True)
class QVResult:
    realized: float
    predicted: float

    @property
    def relative_gap(self) -> float:
        if self.predicted == 0.0:
            return 0.0 if self.realized == 0.0 else math.inf
        return abs(self.realized - self.predicted) / self.predicted


def qv_check(F: CylinderFunction, traj: Trajectory, bp: BrownianPath,
             spec: Optional[InteractionSpec] = None) -> QVResult:
    """Realized sum of (dM)^2 against the predicted integral of |grad F|^2 (identity diffusion)."""
    _check_gaps(F, traj, spec)
    inc = _increments(traj, bp)
    x = traj.positions
    n = len(traj.times) - 1
    grads = [F.gradient(x[k]) for k in range(n)]
    realized = float(sum(float(np.sum(g * inc[k])) ** 2 for k, g in enumerate(grads)))
    predicted = traj.dt * float(sum(float(np.sum(g * g)) for g in grads))
    return QVResult(realized, predicted)


def increment_statistic(F: CylinderFunction, frac: float = 0.5) -> Callable[[Trajectory], float]:
    """Statistic w -> F(w_0) - F(w_{frac T})."""
    def stat(traj: Trajectory) -> float:
        k = round(frac * (len(traj.times) - 1))
        return F.value(traj.positions[0]) - F.value(traj.positions[k])
    return stat


def reversibility_test(ensemble: Sequence[Trajectory], statistic: Callable[[Trajectory], float],
                       T: Optional[float] = None, min_members: int = 20) -> float:
    """KS p-value between statistic(w) and statistic(reverse_path(w)) over the ensemble."""
    if len(ensemble) < min_members:
        raise InsufficientEnsemble(f"need at least {min_members} trajectories, got {len(ensemble)}")
    fwd = np.array([statistic(tr) for tr in ensemble])
    bwd = np.array([statistic(reverse_path(tr, T)) for tr in ensemble])
    return float(ks_2samp(fwd, bwd, method="asymp").pvalue)
