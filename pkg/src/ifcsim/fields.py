"""Correlation functions of sampled configurations and their kernel references."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.stats import ks_2samp

from .config import Configuration
from .errors import InsufficientEnsemble

__all__ = [
    "CorrelationEstimate",
    "estimate_correlation",
    "sine_kernel_rho",
    "sine_rho2_bin_average",
    "bessel_j",
    "bessel_kernel",
    "H1Report",
    "h1_gap",
    "h1_convergence_check",
    "stationarity_test",
    "count_in_ball",
    "count_in_window",
]


@dataclass(frozen=True)
class CorrelationEstimate:
    """Binned correlation estimate.

    ``mode`` is "density" (order 1), "grid" (order 2 on bins x bins) or
    "separation" (order 2 as a function of y - x with x in a reference window).
    """

    order: int
    edges: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    ensemble_size: int
    mode: str = "density"

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])


def _per_member(counts: np.ndarray, volume, m: int):
    mean = counts.mean(axis=0) / volume
    sd = counts.std(axis=0, ddof=1) / math.sqrt(m) / volume if m > 1 else np.zeros_like(mean)
    return mean, sd


def estimate_correlation(ensemble: Sequence[Configuration], n: int, bins, mode: Optional[str] = None,
                         window: Optional[tuple] = None, min_members: int = 50) -> CorrelationEstimate:
    """Estimate rho^1 or rho^2 of the field behind ``ensemble``.

    ``bins`` are edges on the first coordinate (d = 1) or on the modulus
    (d > 1, order 1 only).  In separation mode ``window`` = (lo, hi) bounds
    the reference points x and the bins are edges in y - x.
    """
    if n not in (1, 2):
        raise ValueError("only orders 1 and 2 are supported")
    m = len(ensemble)
    if m < min_members:
        raise InsufficientEnsemble(f"need at least {min_members} configurations, got {m}")
    edges = np.asarray(bins, dtype=float)
    dim = ensemble[0].dim
    if n == 1:
        if dim == 1:
            coord = [c.points[:, 0] for c in ensemble]
            vol = np.diff(edges)
        else:
            coord = [np.sqrt(np.einsum("ij,ij->i", c.points, c.points)) for c in ensemble]
            unit = {2: math.pi, 3: 4.0 * math.pi / 3.0}[dim]
            vol = unit * np.diff(edges**dim)
        counts = np.array([np.histogram(x, edges)[0] for x in coord], dtype=float)
        mean, sd = _per_member(counts, vol, m)
        return CorrelationEstimate(1, edges, mean, sd, m, "density")
    if dim != 1:
        raise ValueError("order-2 estimates are implemented for d = 1")
    mode = mode or ("separation" if window is not None else "grid")
    if mode == "grid":
        width = np.diff(edges)
        vol = np.outer(width, width)
        counts = np.empty((m, len(width), len(width)))
        for k, c in enumerate(ensemble):
            x = c.points[:, 0]
            h1 = np.histogram(x, edges)[0].astype(float)
            # ordered pairs of distinct points = all ordered pairs minus self-pairs
            counts[k] = np.outer(h1, h1) - np.diag(h1)
        mean, sd = _per_member(counts, vol, m)
        return CorrelationEstimate(2, edges, mean, sd, m, "grid")
    if mode != "separation" or window is None:
        raise ValueError("separation mode needs a reference window (lo, hi)")
    lo, hi = window
    vol = (hi - lo) * np.diff(edges)
    counts = np.empty((m, len(edges) - 1))
    for k, c in enumerate(ensemble):
        x = np.sort(c.points[:, 0])
        ref = x[(x >= lo) & (x < hi)]
        sep = (x[None, :] - ref[:, None]).ravel()
        sep = sep[sep != 0.0]  # self-pairs; simple configurations have no other zero separations
        counts[k] = np.histogram(sep, edges)[0]
    mean, sd = _per_member(counts, vol, m)
    return CorrelationEstimate(2, edges, mean, sd, m, "separation")


def sine_kernel_rho(n: int, *args):
    """rho^1 = 1 and rho^2(x, y) = 1 - (sin pi(x-y) / pi(x-y))^2 of the sine process."""
    if n == 1:
        return 1.0 if np.ndim(args[0] if args else 0) == 0 else np.ones_like(np.asarray(args[0], float))
    if n != 2:
        raise ValueError("only orders 1 and 2 are supported")
    x, y = (np.asarray(a, dtype=float) for a in args)
    out = 1.0 - np.sinc(x - y) ** 2
    return float(out) if out.ndim == 0 else out


def sine_rho2_bin_average(edges) -> np.ndarray:
    """Average of rho^2 over separation bins, by quadrature."""
    edges = np.asarray(edges, dtype=float)
    f = lambda u: 1.0 - np.sinc(u) ** 2  # noqa: E731
    return np.array([quad(f, a, b, epsabs=1e-13)[0] / (b - a) for a, b in zip(edges[:-1], edges[1:])])


# ------------------------------------------------------------------ Bessel

def bessel_j(alpha: float, z, derivative: bool = False):
    """J_alpha(z) (or J_alpha'(z)) by the ascending series, stopping when terms drop below 1e-16."""
    z = np.asarray(z, dtype=float)
    half = z / 2.0
    total = np.zeros_like(z)
    k = 0
    while True:
        logc = -math.lgamma(k + 1) - math.lgamma(k + alpha + 1)
        sign = -1.0 if k % 2 else 1.0
        p = 2 * k + alpha
        if derivative:
            term = sign * np.exp(logc) * (p / 2.0) * half ** (p - 1)
        else:
            term = sign * np.exp(logc) * half**p
        total = total + term
        if k > 2 and np.all(np.abs(term) <= 1e-16 * np.maximum(np.abs(total), 1e-300)):
            break
        k += 1
        if k > 500:
            break
    return float(total) if total.ndim == 0 else total


def _bessel_uv(x, alpha):
    sx = np.sqrt(x)
    u = bessel_j(alpha, sx)
    v = sx * bessel_j(alpha, sx, derivative=True)
    return u, v


def bessel_kernel(x, y, alpha: float):
    """Bessel kernel (J(sx) sy J'(sy) - sx J'(sx) J(sy)) / (2(x - y)), s = square root."""
    x = float(x)
    y = float(y)
    if x <= 0 or y <= 0:
        raise ValueError("the Bessel kernel needs x, y > 0")
    if x == y:
        z = math.sqrt(x)
        j = bessel_j(alpha, z)
        jp = bessel_j(alpha, z, derivative=True)
        jpp = -jp / z - (1.0 - alpha**2 / z**2) * j
        # f(x) = J(sqrt x); K(x, x) = x f'^2 - f f' - x f f''
        f1 = jp / (2 * z)
        f2 = (jpp - jp / z) / (4 * z * z)
        return x * f1 * f1 - j * f1 - x * j * f2
    ux, vx = _bessel_uv(x, alpha)
    uy, vy = _bessel_uv(y, alpha)
    return (ux * vy - vx * uy) / (2.0 * (x - y))


# ------------------------------------------------------------------ H1

@dataclass(frozen=True)
class H1Report:
    ns: list
    gaps: np.ndarray
    stderr: np.ndarray
    decreasing: bool
    final_gap: float


def h1_gap(est: CorrelationEstimate, reference: Optional[np.ndarray] = None) -> tuple:
    """(sup_bins |rho^2_hat - reference|, stderr at the worst bin)."""
    ref = sine_rho2_bin_average(est.edges) if reference is None else np.asarray(reference)
    dev = np.abs(est.values - ref)
    k = int(dev.argmax())
    return float(dev[k]), float(est.stderr[k])


def h1_convergence_check(ensembles: Mapping[int, object], edges=None, window: tuple = (-2.0, 2.0),
                         reference: Optional[np.ndarray] = None, min_members: int = 50) -> H1Report:
    """Sup gap between unfolded rho^2 estimates and the sine reference along an N ladder.

    ``ensembles`` maps N to a list of unfolded configurations or to a ready
    CorrelationEstimate.  "Decreasing" allows each step to rise by at most
    two combined standard errors.
    """
    if len(ensembles) < 3:
        raise InsufficientEnsemble("the N ladder needs at least three sizes")
    edges = np.linspace(-3.0, 3.0, 13) if edges is None else np.asarray(edges, dtype=float)
    ref = sine_rho2_bin_average(edges) if reference is None else np.asarray(reference)
    ns = sorted(ensembles)
    gaps, errs = [], []
    for n in ns:
        data = ensembles[n]
        est = data if isinstance(data, CorrelationEstimate) else estimate_correlation(
            data, 2, edges, mode="separation", window=window, min_members=min_members)
        g, s = h1_gap(est, ref)
        gaps.append(g)
        errs.append(s)
    gaps = np.array(gaps)
    errs = np.array(errs)
    ok = all(gaps[k + 1] <= gaps[k] + 2.0 * math.hypot(errs[k], errs[k + 1]) for k in range(len(ns) - 1))
    return H1Report(ns, gaps, errs, bool(ok), float(gaps[-1]))


# ------------------------------------------------------------------ stationarity

def count_in_ball(r: float = 1.0) -> Callable[[Configuration], float]:
    return lambda cfg: float(cfg.count_in_ball(r, closed=True))


def count_in_window(lo: float, hi: float) -> Callable[[Configuration], float]:
    def stat(cfg: Configuration) -> float:
        x = cfg.points[:, 0]
        return float(np.count_nonzero((x >= lo) & (x < hi)))
    return stat


def stationarity_test(ensemble, statistic: Callable[[Configuration], float], min_members: int = 20) -> float:
    """KS p-value between statistic(X_0) and statistic(X_T) over the ensemble."""
    if len(ensemble) < min_members:
        raise InsufficientEnsemble(f"need at least {min_members} trajectories, got {len(ensemble)}")
    s0 = np.array([statistic(tr.configuration(0)) for tr in ensemble])
    s1 = np.array([statistic(tr.configuration(len(tr.times) - 1)) for tr in ensemble])
    return float(ks_2samp(s0, s1, method="asymp").pvalue)
