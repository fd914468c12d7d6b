"""Seed handling: every ensemble member gets its own stream derived from (seed, member)."""
from __future__ import annotations

import numpy as np


def make_rng(seed: int, member: int | None = None) -> np.random.Generator:
    """Generator for ``seed`` or for member ``member`` of an ensemble seeded by ``seed``.

    Streams are derived by hashing the pair through ``SeedSequence``, so the
    result does not depend on the order in which members are scheduled.
    """
    if member is None:
        return np.random.default_rng(np.random.SeedSequence(int(seed)))
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(member)]))


def member_seed(seed: int, member: int) -> int:
    """A 63-bit integer seed for ensemble member ``member``."""
    ss = np.random.SeedSequence([int(seed), int(member)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
