"""Key-value reports with mergeable ensemble aggregates."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import SchemaMismatch

__all__ = ["SCHEMA_VERSION", "Aggregate", "Report", "report_merge", "format_value"]

SCHEMA_VERSION = 1


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.17g}"
    if isinstance(v, (list, tuple)):
        return ",".join(format_value(x) for x in v)
    return str(v)


@dataclass(frozen=True)
class Aggregate:
    """Count, sum, sum of squares, min and max of a scalar over ensemble members."""

    n: int = 0
    total: float = 0.0
    sumsq: float = 0.0
    lo: float = math.inf
    hi: float = -math.inf

    @classmethod
    def of(cls, values: Iterable[float]) -> "Aggregate":
        vals = [float(v) for v in values]
        if not vals:
            return cls()
        return cls(len(vals), math.fsum(vals), math.fsum(v * v for v in vals), min(vals), max(vals))

    def merge(self, other: "Aggregate") -> "Aggregate":
        return Aggregate(self.n + other.n, self.total + other.total, self.sumsq + other.sumsq,
                         min(self.lo, other.lo), max(self.hi, other.hi))

    @property
    def mean(self) -> float:
        return self.total / self.n if self.n else math.nan

    @property
    def std(self) -> float:
        if self.n < 2:
            return math.nan
        var = (self.sumsq - self.total * self.total / self.n) / (self.n - 1)
        return math.sqrt(max(var, 0.0))


@dataclass
class Report:
    """Scalars (must agree when merged) and aggregates (combined when merged)."""

    values: dict = field(default_factory=dict)
    aggregates: dict = field(default_factory=dict)
    schema: int = SCHEMA_VERSION

    def add(self, key: str, value) -> None:
        self.values[key] = value

    def add_samples(self, key: str, samples: Sequence[float]) -> None:
        agg = Aggregate.of(samples)
        self.aggregates[key] = self.aggregates[key].merge(agg) if key in self.aggregates else agg

    def lines(self) -> list:
        out = {"schema": str(self.schema)}
        for k, v in self.values.items():
            out[k] = format_value(v)
        for k, a in self.aggregates.items():
            out[f"{k}.n"] = str(a.n)
            out[f"{k}.mean"] = format_value(a.mean)
            out[f"{k}.std"] = format_value(a.std)
            out[f"{k}.min"] = format_value(a.lo)
            out[f"{k}.max"] = format_value(a.hi)
        return [f"{k} = {out[k]}" for k in sorted(out)]

    def to_text(self) -> str:
        return "\n".join(self.lines()) + "\n"


def report_merge(reports: Sequence[Report]) -> Report:
    """Associative, order-independent merge of ensemble reports."""
    out = Report()
    for r in reports:
        if r.schema != out.schema:
            raise SchemaMismatch(f"schema {r.schema} does not match {out.schema}")
        for k, v in r.values.items():
            if k in out.values and out.values[k] != v:
                raise SchemaMismatch(f"scalar {k!r} differs between reports")
            out.values[k] = v
        for k, a in r.aggregates.items():
            out.aggregates[k] = out.aggregates[k].merge(a) if k in out.aggregates else a
    return out
