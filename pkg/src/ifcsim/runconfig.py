"""Line-based run configuration: ``section.key = value`` with ``#`` comments."""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Callable

from .errors import ConfigError
from .models import Kind
from .report import format_value

__all__ = ["RunConfig", "parse_config", "load_config", "default_out_dir", "SCHEMA", "OUT_ENV"]

OUT_ENV = "IFCSIM_OUT"


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text: str) -> tuple:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _words(text: str) -> tuple:
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _kind(text: str) -> str:
    return Kind.parse(text).value


def _optional_float(text: str):
    return None if text.strip().lower() in ("none", "auto", "") else float(text)


def _confinement(text: str):
    return "auto" if text.strip().lower() == "auto" else float(text)


def _scheme(text: str) -> str:
    if text not in ("euler", "tamed_euler"):
        raise ValueError(f"unknown scheme {text!r}")
    return text


def _init(text: str) -> str:
    if text not in ("lattice", "equilibrium", "poisson", "cluster"):
        raise ValueError(f"unknown initial condition {text!r}")
    return text


# key -> (parser, default)
SCHEMA: dict = {
    "seed": (int, 0),
    "output.dir": (str, ""),
    "model.kind": (_kind, "Free"),
    "model.dim": (int, 1),
    "model.beta": (float, 2.0),
    "model.alpha": (float, 1.0),
    "model.riesz_a": (_optional_float, None),
    "model.cutoff": (float, math.inf),
    "model.confinement": (_confinement, 0.0),
    "sampler.n_particles": (int, 1),
    "sampler.init": (_init, "lattice"),
    "sampler.spacing": (float, 1.0),
    "sampler.window": (float, 6.0),
    "solver.scheme": (_scheme, "euler"),
    "solver.dt": (float, 1e-3),
    "solver.T": (float, 0.1),
    "solver.min_gap_substep_threshold": (_optional_float, None),
    "solver.max_substep_depth": (lambda t: None if t.strip().lower() in ("none", "auto") else int(t), None),
    "solver.collision_abort_gap": (float, 1e-8),
    "solver.finest_factor": (int, 16),
    "experiment.ensemble": (int, 1),
    "experiment.m": (int, 1),
    "experiment.dt_ladder": (_floats, (4e-3, 2e-3, 1e-3)),
    "experiment.schemes": (_words, ("euler", "tamed_euler")),
    "experiment.region": (_ints, (30, 10, 10)),
    "experiment.upsilon": (_bool, True),
    "experiment.chi": (_ints, (1, 1)),
    "experiment.nbj": (float, 1.0),
    "experiment.kappa": (int, 3),
    "experiment.n_ladder": (_ints, (20, 40, 80)),
    "experiment.window": (float, 4.0),
    "experiment.min_order": (float, 0.4),
}


@dataclass
class RunConfig:
    values: dict = field(default_factory=lambda: {k: d for k, (_, d) in SCHEMA.items()})

    def __getitem__(self, key: str):
        return self.values[key]

    def set(self, key: str, raw) -> None:
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        parser: Callable = SCHEMA[key][0]
        if isinstance(raw, str):
            try:
                self.values[key] = parser(raw.strip())
            except ValueError as exc:
                raise ConfigError(f"{key} = {raw.strip()}: {exc}") from None
        else:
            self.values[key] = raw

    def resolved_lines(self) -> list:
        return [f"config.{k} = {format_value(self.values[k])}" for k in sorted(self.values)]


def parse_config(text: str) -> RunConfig:
    cfg = RunConfig()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        cfg.set(key, value)
    return cfg


def load_config(path: str) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc.strerror}") from None


def default_out_dir() -> str:
    return os.environ.get(OUT_ENV, "ifcsim-out")
