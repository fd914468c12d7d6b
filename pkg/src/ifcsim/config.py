"""Configurations, labels, m-labeled splitting and tame-set membership.

A configuration is a finite multiset of points in R^d (d = 1, 2, 3); it is the
desk-scale stand-in for a locally finite point measure.  All containers here
are immutable: their coordinate arrays are flagged read-only on construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import IndexOutOfRange, NonSimpleConfiguration

__all__ = [
    "Configuration",
    "LabeledState",
    "MLabeledState",
    "TameSchedule",
    "default_schedule",
    "as_points",
    "unlabel",
    "label",
    "label_order",
    "split_m",
    "tame_level",
    "ball_counts",
    "is_simple",
    "min_pairwise_distance",
    "dumps_configuration",
    "loads_configuration",
]


def as_points(points, dim: int | None = None) -> np.ndarray:
    """Coerce ``points`` to a read-only float array of shape (n, d)."""
    arr = np.array(points, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim == 1:
        if dim is None or dim == 1:
            arr = arr.reshape(-1, 1)
        else:
            arr = arr.reshape(-1, dim)
    if arr.size == 0:
        arr = np.zeros((0, dim or (arr.shape[1] if arr.ndim == 2 else 1)))
    if dim is not None and arr.shape[1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got {arr.shape[1]}")
    if arr.shape[1] not in (1, 2, 3):
        raise ValueError(f"dimension must be 1, 2 or 3, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("coordinates must be finite")
    arr.setflags(write=False)
    return arr


def _canonical(points: np.ndarray) -> np.ndarray:
    if len(points) == 0:
        return points
    keys = [points[:, k] for k in range(points.shape[1] - 1, -1, -1)]
    return points[np.lexsort(keys)]


@dataclass(frozen=True, eq=False)
class Configuration:
    """Unordered finite point cloud in R^d.

    Equality is multiset equality: two configurations holding the same points
    in different orders compare equal.
    """

    points: np.ndarray
    dim: int = 1

    def __init__(self, points=(), dim: int | None = None):
        arr = as_points(points, dim)
        object.__setattr__(self, "points", arr)
        object.__setattr__(self, "dim", arr.shape[1])

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Configuration):
            return NotImplemented
        if self.dim != other.dim or len(self) != len(other):
            return False
        return bool(np.array_equal(_canonical(self.points), _canonical(other.points)))

    def __hash__(self):
        return hash((self.dim, _canonical(self.points).tobytes()))

    def __repr__(self) -> str:
        return f"Configuration(n={len(self)}, dim={self.dim})"

    @property
    def simple(self) -> bool:
        return is_simple(self, 0.0)

    def count_in_ball(self, r: float, closed: bool = True) -> int:
        sq = np.einsum("ij,ij->i", self.points, self.points)
        if closed:
            return int(np.count_nonzero(sq <= r * r))
        return int(np.count_nonzero(sq < r * r))

    def union(self, other: "Configuration") -> "Configuration":
        if len(other) == 0:
            return self
        if len(self) == 0:
            return other
        return Configuration(np.vstack([self.points, other.points]))


@dataclass(frozen=True, eq=False)
class LabeledState:
    """Positions in label order.

    ``label`` produces states sorted by modulus; states along a trajectory keep
    the labels assigned at time zero.
    """

    positions: np.ndarray

    def __init__(self, positions=(), dim: int | None = None):
        object.__setattr__(self, "positions", as_points(positions, dim))

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def __len__(self) -> int:
        return len(self.positions)

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabeledState):
            return NotImplemented
        return self.positions.shape == other.positions.shape and bool(
            np.array_equal(self.positions, other.positions)
        )

    def __hash__(self):
        return hash(self.positions.tobytes())


@dataclass(frozen=True)
class MLabeledState:
    tagged: np.ndarray
    environment: Configuration

    def __init__(self, tagged, environment: Configuration):
        object.__setattr__(self, "tagged", as_points(tagged, environment.dim))
        object.__setattr__(self, "environment", environment)

    @property
    def m(self) -> int:
        return len(self.tagged)

    def recombine(self) -> Configuration:
        return Configuration(self.tagged, self.environment.dim).union(self.environment)


@dataclass(frozen=True)
class TameSchedule:
    """Level sequence a_q(r) = ceil(C(q) r^alpha) for the tame sets K[a_q].

    ``level_scale`` is either a callable q -> C(q) or a sequence with
    ``level_scale[q - 1] = C(q)``.  ``max_level`` is the radius cap Q on the
    balls checked; ``None`` means unbounded.
    """

    growth_exponent: float
    level_scale: Callable[[int], float] | Sequence[float]
    max_level: int | None = None

    def __post_init__(self):
        if self.growth_exponent <= 0:
            raise ValueError("growth exponent must be positive")
        if self.max_level is not None and self.max_level < 1:
            raise ValueError("max_level must be a positive integer or None")

    def scale(self, q: int) -> float:
        if q < 1:
            raise ValueError("levels start at q = 1")
        if callable(self.level_scale):
            return float(self.level_scale(q))
        return float(self.level_scale[q - 1])

    def a(self, q: int, r: int) -> int:
        return math.ceil(self.scale(q) * float(r) ** self.growth_exponent)

    def a_plus(self, q: int, r: int) -> int:
        return 1 + self.a(q, r + 1)

    def radii(self, cfg: Configuration | None = None) -> range:
        if self.max_level is not None:
            return range(1, self.max_level + 1)
        if cfg is None or len(cfg) == 0:
            return range(1, 2)
        rmax = float(np.sqrt(np.max(np.einsum("ij,ij->i", cfg.points, cfg.points))))
        return range(1, max(1, math.ceil(rmax)) + 1)

    def check_chain(self, q_max: int = 10, r_max: int = 10) -> bool:
        """Check a_q(r) < a_q(r+1), a_q(r) < a_{q+1}(r) and a_q^+(r) < a_{q+1}(r)."""
        for q in range(1, q_max + 1):
            for r in range(1, r_max + 1):
                if not self.a(q, r) < self.a(q, r + 1):
                    return False
                if not self.a(q, r) < self.a(q + 1, r):
                    return False
                if not self.a_plus(q, r) < self.a(q + 1, r):
                    return False
        return True


_BALL_VOLUME = {1: 2.0, 2: math.pi, 3: 4.0 * math.pi / 3.0}


def default_schedule(dim: int, density: float = 1.0, max_level: int | None = None) -> TameSchedule:
    """Schedule with alpha = d, C(1) = ceil(2 * density * |unit ball|), C(q+1) = 2^d C(q) + 2.

    The recursion guarantees a_q^+(r) < a_{q+1}(r) for every r >= 1, so the
    tame sets are nested as K[a_q] in K[a_q^+] in K[a_{q+1}].
    """
    c1 = math.ceil(2.0 * density * _BALL_VOLUME[dim])
    scales = [float(c1)]

    def level_scale(q: int) -> float:
        while len(scales) < q:
            scales.append((2.0 ** dim) * scales[-1] + 2.0)
        return scales[q - 1]

    return TameSchedule(float(dim), level_scale, max_level)


def unlabel(state: LabeledState) -> Configuration:
    return Configuration(state.positions, state.dim)


def label_order(points: np.ndarray) -> np.ndarray:
    """Permutation sorting points by |x|, ties broken lexicographically."""
    sq = np.einsum("ij,ij->i", points, points)
    keys = [points[:, k] for k in range(points.shape[1] - 1, -1, -1)] + [sq]
    return np.lexsort(keys)


def label(cfg: Configuration) -> LabeledState:
    if not is_simple(cfg, 0.0):
        raise NonSimpleConfiguration("cannot label a configuration with coincident points")
    return LabeledState(cfg.points[label_order(cfg.points)], cfg.dim)


def split_m(state: LabeledState, m: int) -> MLabeledState:
    if not 0 <= m <= len(state):
        raise IndexOutOfRange(f"m={m} outside [0, {len(state)}]")
    return MLabeledState(state.positions[:m], Configuration(state.positions[m:], state.dim))


def ball_counts(cfg: Configuration, radii: Iterable[int], closed: bool = True) -> np.ndarray:
    sq = np.sort(np.einsum("ij,ij->i", cfg.points, cfg.points))
    r2 = np.asarray([float(r) ** 2 for r in radii])
    side = "right" if closed else "left"
    return np.searchsorted(sq, r2, side=side)


def tame_level(cfg: Configuration, sched: TameSchedule, ceiling: int = 64) -> int | float:
    """Smallest q with cfg(closed ball r) <= a_q(r) for every checked r; ``math.inf`` if none <= ceiling."""
    radii = list(sched.radii(cfg))
    counts = ball_counts(cfg, radii, closed=True)
    for q in range(1, ceiling + 1):
        if all(c <= sched.a(q, r) for c, r in zip(counts, radii)):
            return q
    return math.inf


def min_pairwise_distance(points: np.ndarray) -> float:
    n = len(points)
    if n < 2:
        return math.inf
    if points.shape[1] == 1:
        return float(np.min(np.diff(np.sort(points[:, 0]))))
    diff = points[:, None, :] - points[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    dist[np.diag_indices(n)] = np.inf
    return float(dist.min())


def is_simple(cfg: Configuration, tol: float = 0.0) -> bool:
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    return min_pairwise_distance(cfg.points) > tol


def dumps_configuration(cfg: Configuration) -> str:
    lines = [f"# dim={cfg.dim} n={len(cfg)}"]
    lines += [" ".join(f"{c:.17g}" for c in p) for p in cfg.points]
    return "\n".join(lines) + "\n"


def loads_configuration(text: str) -> Configuration:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("#"):
        raise ValueError("missing configuration header")
    header = dict(tok.split("=") for tok in lines[0][1:].split())
    dim, n = int(header["dim"]), int(header["n"])
    rows = [[float(v) for v in ln.split()] for ln in lines[1:]]
    if len(rows) != n:
        raise ValueError(f"header announces {n} points, found {len(rows)}")
    return Configuration(np.array(rows).reshape(n, dim), dim)
