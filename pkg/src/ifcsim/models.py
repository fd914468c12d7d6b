"""Drift coefficients of the shipped interacting Brownian motion models.

Every model has unit diffusion; the drift of particle x in environment Y is a
one-body term plus a sum of pair kernels k(x - y).  The vectorized
``system_drift`` is what the integrator calls; ``drift`` and friends are the
checked single-point API with convergence reporting.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np

from .config import Configuration, LabeledState, as_points
from .errors import CollisionTooClose, IndexOutOfRange, NonConvergentSum

__all__ = [
    "Kind",
    "BumpPotential",
    "BumpSkewPotential",
    "InteractionSpec",
    "DriftValue",
    "COLLISION_TOL",
    "CONVERGENCE_THRESHOLD",
    "pair_kernel",
    "pair_kernel_jacobian",
    "system_drift",
    "drift",
    "drift_tail_decomposition",
    "drift_jacobian",
    "drift_skew",
    "finite_N_drift",
]

COLLISION_TOL = 1e-10
CONVERGENCE_THRESHOLD = 0.05


class Kind(str, Enum):
    SINE_BETA = "SineBeta"
    BESSEL = "Bessel"
    GINIBRE_REP1 = "GinibreRep1"
    GINIBRE_REP2 = "GinibreRep2"
    LENNARD_JONES = "LennardJones"
    RIESZ = "Riesz"
    RUELLE_COMPACT = "RuelleCompact"
    SKEW_POISSON = "SkewPoisson"
    FREE = "Free"

    @classmethod
    def parse(cls, name: str) -> "Kind":
        for k in cls:
            if k.value.lower() == str(name).lower():
                return k
        raise ValueError(f"unknown model kind {name!r}")


def _bump(s):
    """g(s) = exp(1 - 1/(1-s)) on s < 1 with its first two s-derivatives; zero outside."""
    s = np.asarray(s, dtype=float)
    inside = s < 1.0
    g, g1, g2 = np.zeros_like(s), np.zeros_like(s), np.zeros_like(s)
    t = 1.0 - s[inside]
    gi = np.exp(1.0 - 1.0 / t)
    g[inside] = gi
    g1[inside] = -gi / t**2
    g2[inside] = gi / t**4 - 2.0 * gi / t**3
    return g, g1, g2


@dataclass(frozen=True)
class BumpPotential:
    """Smooth, compactly supported, repulsive pair potential A * exp(1 - 1/(1 - |u|^2/R^2))."""

    amplitude: float = 1.0
    radius: float = 1.0

    @property
    def support_radius(self) -> float:
        return self.radius

    def value(self, u, r2=None):
        u = np.asarray(u, dtype=float)
        r2 = np.einsum("...k,...k->...", u, u) if r2 is None else r2
        g, _, _ = _bump(r2 / self.radius**2)
        return self.amplitude * g

    def grad(self, u, r2=None):
        u = np.asarray(u, dtype=float)
        r2 = np.einsum("...k,...k->...", u, u) if r2 is None else r2
        _, g1, _ = _bump(r2 / self.radius**2)
        return (self.amplitude * 2.0 * g1 / self.radius**2)[..., None] * u

    def hess(self, u, r2=None):
        u = np.asarray(u, dtype=float)
        r2 = np.einsum("...k,...k->...", u, u) if r2 is None else r2
        R2 = self.radius**2
        _, g1, g2 = _bump(r2 / R2)
        eye = np.eye(u.shape[-1])
        outer = u[..., :, None] * u[..., None, :]
        return self.amplitude * (
            (2.0 * g1 / R2)[..., None, None] * eye + (4.0 * g2 / R2**2)[..., None, None] * outer
        )


@dataclass(frozen=True)
class BumpSkewPotential:
    """Skew potential with Gamma_12 = -Gamma_21 = strength * exp(1/(|u|^2/R^2 - 1)), other entries 0.

    gamma0_k = sum_l d Gamma_kl / d u_l, i.e. gamma0 = strength * (d_2 phi, -d_1 phi, 0).
    """

    strength: float = 1.0
    radius: float = 1.0

    @property
    def support_radius(self) -> float:
        return self.radius

    def _phi_grad(self, u, r2):
        R2 = self.radius**2
        _, g1, _ = _bump(r2 / R2)
        return (self.strength / math.e * 2.0 * g1 / R2)[..., None] * u

    def _phi_derivs(self, u, r2):
        R2 = self.radius**2
        g, g1, g2 = _bump(r2 / R2)
        c = self.strength / math.e
        grad = (c * 2.0 * g1 / R2)[..., None] * u
        eye = np.eye(u.shape[-1])
        outer = u[..., :, None] * u[..., None, :]
        hess = c * ((2.0 * g1 / R2)[..., None, None] * eye + (4.0 * g2 / R2**2)[..., None, None] * outer)
        return c * g, grad, hess

    def gamma_matrix(self, u):
        u = np.asarray(u, dtype=float)
        r2 = np.einsum("...k,...k->...", u, u)
        phi, _, _ = self._phi_derivs(u, r2)
        out = np.zeros(u.shape[:-1] + (u.shape[-1], u.shape[-1]))
        out[..., 0, 1] = phi
        out[..., 1, 0] = -phi
        return out

    def gamma0(self, u, r2=None):
        u = np.asarray(u, dtype=float)
        r2 = np.einsum("...k,...k->...", u, u) if r2 is None else r2
        grad = self._phi_grad(u, r2)
        out = np.zeros_like(u)
        out[..., 0] = grad[..., 1]
        out[..., 1] = -grad[..., 0]
        return out

    def gamma0_jacobian(self, u, r2=None):
        """J[..., k, j] = d gamma0_k / d u_j."""
        u = np.asarray(u, dtype=float)
        r2 = np.einsum("...k,...k->...", u, u) if r2 is None else r2
        _, _, hess = self._phi_derivs(u, r2)
        out = np.zeros(u.shape + (u.shape[-1],))
        out[..., 0, :] = hess[..., 1, :]
        out[..., 1, :] = -hess[..., 0, :]
        return out


@dataclass(frozen=True)
class InteractionSpec:
    """Model descriptor: kind, parameters, and the diffusion slot (identity for all shipped models)."""

    kind: Kind
    dim: int = 1
    beta: float = 2.0
    alpha: float = 1.0
    riesz_a: Optional[float] = None
    pair_potential: Optional[BumpPotential] = None
    skew_potential: Optional[BumpSkewPotential] = None
    confinement: float = 0.0
    cutoff: float = math.inf
    diffusion: Optional[object] = field(default=None, repr=False)

    def __post_init__(self):
        kind = Kind.parse(self.kind) if not isinstance(self.kind, Kind) else self.kind
        object.__setattr__(self, "kind", kind)
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.cutoff <= 0:
            raise ValueError("cutoff must be positive")
        if self.confinement < 0:
            raise ValueError("confinement must be nonnegative")
        if kind in (Kind.SINE_BETA, Kind.BESSEL) and self.dim != 1:
            raise ValueError(f"{kind.value} requires d = 1")
        if kind is Kind.BESSEL and self.alpha < 1:
            raise ValueError("Bessel requires alpha >= 1")
        if kind in (Kind.GINIBRE_REP1, Kind.GINIBRE_REP2) and self.dim != 2:
            raise ValueError("Ginibre requires d = 2")
        if kind is Kind.RIESZ:
            if self.riesz_a is None or self.riesz_a <= self.dim:
                raise ValueError("Riesz requires exponent a > d")
        if kind is Kind.RUELLE_COMPACT and self.pair_potential is None:
            object.__setattr__(self, "pair_potential", BumpPotential())
        if kind is Kind.SKEW_POISSON:
            if self.dim != 3:
                raise ValueError("SkewPoisson requires d = 3")
            if self.skew_potential is None:
                object.__setattr__(self, "skew_potential", BumpSkewPotential())
        if self.diffusion is not None:
            raise NotImplementedError("only the identity diffusion is shipped")

    @property
    def preserves_order(self) -> bool:
        """Whether d = 1 paths must keep their ordering (log repulsion with beta >= 1)."""
        return self.dim == 1 and (
            (self.kind is Kind.SINE_BETA and self.beta >= 1) or self.kind is Kind.BESSEL
        )

    def diffusion_matrix(self, x=None) -> np.ndarray:
        return np.eye(self.dim)

    def interaction_range(self) -> float:
        """Distance beyond which pair kernels vanish identically (inf for long-range models)."""
        if self.kind is Kind.RUELLE_COMPACT:
            return self.pair_potential.support_radius
        if self.kind is Kind.SKEW_POISSON:
            r = self.skew_potential.support_radius
            if self.pair_potential is not None:
                r = max(r, self.pair_potential.support_radius)
            return r
        if self.kind is Kind.FREE:
            return 0.0
        return math.inf


@dataclass(frozen=True)
class DriftValue:
    vector: np.ndarray
    cutoff_radius_used: float
    convergence_gap: float


def pair_kernel(spec: InteractionSpec, u: np.ndarray, r2: np.ndarray) -> np.ndarray:
    """Drift contribution k(u) of a neighbour at offset u = x - y.

    ``r2`` is |u|^2; entries set to +inf contribute zero.
    """
    kind = spec.kind
    if kind in (Kind.SINE_BETA, Kind.BESSEL, Kind.GINIBRE_REP1, Kind.GINIBRE_REP2):
        coef = 0.5 * spec.beta if kind is Kind.SINE_BETA else 1.0
        return (coef / r2)[..., None] * u
    if kind is Kind.LENNARD_JONES:
        inv2 = 1.0 / r2
        inv8 = inv2**4
        return (0.5 * spec.beta * (12.0 * inv8 * inv2**3 - 6.0 * inv8))[..., None] * u
    if kind is Kind.RIESZ:
        return (0.5 * spec.beta * r2 ** (-(spec.riesz_a + 2.0) / 2.0))[..., None] * u
    if kind is Kind.RUELLE_COMPACT:
        return -0.5 * spec.beta * spec.pair_potential.grad(u, r2)
    if kind is Kind.SKEW_POISSON:
        out = 0.5 * spec.beta * spec.skew_potential.gamma0(u, r2)
        if spec.pair_potential is not None:
            out = out - 0.5 * spec.beta * spec.pair_potential.grad(u, r2)
        return out
    return np.zeros_like(u)


def _power_jacobian(u, r2, n):
    """Jacobian of u |u|^{-n}."""
    eye = np.eye(u.shape[-1])
    outer = u[..., :, None] * u[..., None, :]
    rn = r2 ** (-n / 2.0)
    return rn[..., None, None] * eye - (n * rn / r2)[..., None, None] * outer


def pair_kernel_jacobian(spec: InteractionSpec, u: np.ndarray, r2: np.ndarray) -> np.ndarray:
    kind = spec.kind
    if kind in (Kind.SINE_BETA, Kind.BESSEL, Kind.GINIBRE_REP1, Kind.GINIBRE_REP2):
        coef = 0.5 * spec.beta if kind is Kind.SINE_BETA else 1.0
        return coef * _power_jacobian(u, r2, 2)
    if kind is Kind.LENNARD_JONES:
        return 0.5 * spec.beta * (12.0 * _power_jacobian(u, r2, 14) - 6.0 * _power_jacobian(u, r2, 8))
    if kind is Kind.RIESZ:
        return 0.5 * spec.beta * _power_jacobian(u, r2, spec.riesz_a + 2.0)
    if kind is Kind.RUELLE_COMPACT:
        return -0.5 * spec.beta * spec.pair_potential.hess(u, r2)
    if kind is Kind.SKEW_POISSON:
        out = 0.5 * spec.beta * spec.skew_potential.gamma0_jacobian(u, r2)
        if spec.pair_potential is not None:
            out = out - 0.5 * spec.beta * spec.pair_potential.hess(u, r2)
        return out
    return np.zeros(u.shape + (u.shape[-1],))


def _one_body(spec: InteractionSpec, x: np.ndarray) -> np.ndarray:
    if spec.kind is Kind.BESSEL:
        return spec.alpha / (2.0 * x)
    if spec.kind is Kind.GINIBRE_REP2:
        return -x
    return np.zeros_like(x)


def _one_body_jacobian(spec: InteractionSpec, x: np.ndarray) -> np.ndarray:
    d = x.shape[-1]
    if spec.kind is Kind.BESSEL:
        return (-spec.alpha / (2.0 * x**2)).reshape(x.shape[:-1] + (1, 1))
    if spec.kind is Kind.GINIBRE_REP2:
        return -np.broadcast_to(np.eye(d), x.shape[:-1] + (d, d)).copy()
    return np.zeros(x.shape[:-1] + (d, d))


def _included(spec: InteractionSpec, r2: np.ndarray, others: np.ndarray, cutoff: float) -> np.ndarray:
    """Mask of neighbours inside the truncation window."""
    if math.isinf(cutoff):
        return np.isfinite(r2)
    if spec.kind is Kind.GINIBRE_REP2:
        y2 = np.einsum("...k,...k->...", others, others)
        return np.broadcast_to(y2 < cutoff * cutoff, r2.shape) & np.isfinite(r2)
    return r2 < cutoff * cutoff


def system_drift(tagged: np.ndarray, env: Optional[np.ndarray], spec: InteractionSpec,
                 confinement: Optional[float] = None) -> np.ndarray:
    """Drift of every tagged particle against the other tagged particles and ``env``.

    Includes the model's one-body term and the harmonic confinement -c x; this
    is the finite-N drift when ``env`` is empty.
    """
    c = spec.confinement if confinement is None else confinement
    m = len(tagged)
    if env is not None and len(env):
        others = np.concatenate([tagged, env], axis=0)
    else:
        others = tagged
    u = tagged[:, None, :] - others[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", u, u)
    r2[np.arange(m), np.arange(m)] = np.inf
    if spec.kind is not Kind.FREE:
        keep = _included(spec, r2, others[None, :, :], spec.cutoff)
        r2 = np.where(keep, r2, np.inf)
        out = pair_kernel(spec, u, r2).sum(axis=1)
    else:
        out = np.zeros_like(tagged)
    out = out + _one_body(spec, tagged)
    if c:
        out = out - c * tagged
    return out


def _check_point(x, env_pts, spec):
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != spec.dim:
        raise ValueError(f"point has dimension {x.shape[0]}, model needs {spec.dim}")
    if len(env_pts):
        u = x[None, :] - env_pts
        dist = np.sqrt(np.einsum("ij,ij->i", u, u))
        if dist.min() < COLLISION_TOL:
            raise CollisionTooClose(f"min distance {dist.min():.3g} below tolerance {COLLISION_TOL}")
    if spec.kind is Kind.BESSEL and x[0] < COLLISION_TOL:
        raise CollisionTooClose("Bessel drift needs x > 0")
    return x


def _raw_sum(x, env_pts, spec, cutoff, window=None):
    if len(env_pts) == 0 or spec.kind is Kind.FREE:
        return np.zeros(spec.dim)
    u = x[None, :] - env_pts
    r2 = np.einsum("ij,ij->i", u, u)
    keep = _included(spec, r2, env_pts, cutoff)
    if window is not None:
        keep = keep & window
    r2 = np.where(keep, r2, np.inf)
    return pair_kernel(spec, u, r2).sum(axis=0)


def _env_points(env) -> np.ndarray:
    if isinstance(env, Configuration):
        return env.points
    return as_points(env) if len(env) else np.zeros((0, 1))


def drift(x, env, spec: InteractionSpec, cutoff: Optional[float] = None,
          check_convergence: bool = True, threshold: float = CONVERGENCE_THRESHOLD) -> DriftValue:
    """ISDE drift b(x, env) truncated at ``cutoff`` (no confinement term).

    For a finite cutoff the window |x - y| < cutoff is symmetric about x (for
    GinibreRep2 the window is |y| < cutoff).  The convergence gap compares the
    truncation at ``cutoff`` and ``cutoff / 2``; an infinite cutoff sums the
    whole (finite) environment exactly and reports a zero gap.
    """
    env_pts = _env_points(env)
    x = _check_point(x, env_pts, spec)
    cutoff = spec.cutoff if cutoff is None else cutoff
    if cutoff <= 0:
        raise ValueError("cutoff must be positive")
    one = _one_body(spec, x[None, :])[0]
    value = one + _raw_sum(x, env_pts, spec, cutoff)
    if math.isinf(cutoff):
        gap = 0.0
    else:
        half = one + _raw_sum(x, env_pts, spec, cutoff / 2.0)
        gap = float(np.linalg.norm(value - half))
        if check_convergence and gap > threshold * (1.0 + float(np.linalg.norm(value))):
            raise NonConvergentSum(f"convergence gap {gap:.3g} at cutoff {cutoff}")
    return DriftValue(value, float(cutoff), gap)


def drift_tail_decomposition(x, env, spec: InteractionSpec, r: float, s: float):
    """Split the drift into the part from neighbours within distance s (only for |x| < r) and the rest."""
    if not 0 < r < s:
        raise ValueError("need 0 < r < s")
    env_pts = _env_points(env)
    full = drift(x, env, spec, check_convergence=False)
    x = np.asarray(x, dtype=float).reshape(-1)
    if float(np.dot(x, x)) < r * r and len(env_pts):
        u = x[None, :] - env_pts
        window = np.einsum("ij,ij->i", u, u) < s * s
        near_vec = _raw_sum(x, env_pts, spec, full.cutoff_radius_used, window=window)
    else:
        near_vec = np.zeros(spec.dim)
    near = DriftValue(near_vec, s, 0.0)
    tail = DriftValue(full.vector - near_vec, full.cutoff_radius_used, full.convergence_gap)
    return near, tail


def drift_jacobian(x, env, spec: InteractionSpec, cutoff: Optional[float] = None) -> np.ndarray:
    """Analytic d x d derivative of ``drift`` in x, summed pair by pair."""
    env_pts = _env_points(env)
    x = _check_point(x, env_pts, spec)
    cutoff = spec.cutoff if cutoff is None else cutoff
    jac = _one_body_jacobian(spec, x[None, :])[0]
    if len(env_pts) and spec.kind is not Kind.FREE:
        u = x[None, :] - env_pts
        r2 = np.einsum("ij,ij->i", u, u)
        r2 = np.where(_included(spec, r2, env_pts, cutoff), r2, np.inf)
        jac = jac + pair_kernel_jacobian(spec, u, r2).sum(axis=0)
    return jac


def drift_skew(x, env, spec: InteractionSpec) -> DriftValue:
    """gamma(x, env) = beta * sum_i gamma0(x - s_i); the SkewPoisson drift is half of this."""
    if spec.kind is not Kind.SKEW_POISSON:
        raise ValueError("drift_skew needs a SkewPoisson spec")
    env_pts = _env_points(env)
    x = _check_point(x, env_pts, spec)
    if len(env_pts) == 0:
        return DriftValue(np.zeros(spec.dim), math.inf, 0.0)
    u = x[None, :] - env_pts
    vec = spec.beta * spec.skew_potential.gamma0(u).sum(axis=0)
    return DriftValue(vec, math.inf, 0.0)


def finite_N_drift(i: int, state: LabeledState, spec: InteractionSpec,
                   confinement: Optional[float] = None) -> DriftValue:
    """Drift of particle ``i`` (1-based) in the N-particle system: full pair sum plus -c x_i."""
    n = len(state)
    if not 1 <= i <= n:
        raise IndexOutOfRange(f"particle index {i} outside [1, {n}]")
    pos = state.positions
    x = pos[i - 1]
    others = np.delete(pos, i - 1, axis=0)
    _check_point(x, others, spec)
    c = spec.confinement if confinement is None else confinement
    full = replace(spec, cutoff=math.inf)
    vec = system_drift(pos[i - 1:i], others, full, confinement=c)[0]
    return DriftValue(vec, math.inf, 0.0)
