import math

import numpy as np
import pytest

from ifcsim.config import (
    Configuration,
    LabeledState,
    TameSchedule,
    default_schedule,
    dumps_configuration,
    is_simple,
    label,
    loads_configuration,
    split_m,
    tame_level,
    unlabel,
)
from ifcsim.errors import IndexOutOfRange, NonSimpleConfiguration


def test_unlabel_forgets_order():
    assert unlabel(LabeledState([[1.0], [-1.0]])) == Configuration([-1.0, 1.0])
    assert len(unlabel(LabeledState([], dim=1))) == 0


def test_unlabel_keeps_multiplicity():
    cfg = unlabel(LabeledState([[0.0, 1.0], [0.0, 1.0]]))
    assert len(cfg) == 2
    assert not cfg.simple


def test_label_sorts_by_modulus():
    st = label(Configuration([3.0, -1.0, 2.0]))
    assert st.positions[:, 0].tolist() == [-1.0, 2.0, 3.0]
    assert label(Configuration([0.7])).positions[:, 0].tolist() == [0.7]


def test_label_tie_break_is_lexicographic():
    assert label(Configuration([1.0, -1.0])).positions[:, 0].tolist() == [-1.0, 1.0]
    st = label(Configuration([[0.0, 1.0], [0.0, -1.0], [1.0, 0.0], [-1.0, 0.0]]))
    assert st.positions.tolist() == [[-1.0, 0.0], [0.0, -1.0], [0.0, 1.0], [1.0, 0.0]]


def test_label_rejects_coincident_points():
    with pytest.raises(NonSimpleConfiguration):
        label(Configuration([1.0, 1.0]))


def test_label_round_trip_random():
    rng = np.random.default_rng(1)
    for d in (1, 2, 3):
        for _ in range(20):
            cfg = Configuration(rng.normal(size=(rng.integers(0, 30), d)), d)
            assert unlabel(label(cfg)) == cfg


def test_split_m():
    st = LabeledState([[-1.0], [2.0], [3.0]])
    s1 = split_m(st, 1)
    assert s1.tagged[:, 0].tolist() == [-1.0] and s1.environment == Configuration([2.0, 3.0])
    s3 = split_m(st, 3)
    assert len(s3.tagged) == 3 and len(s3.environment) == 0
    s0 = split_m(st, 0)
    assert len(s0.tagged) == 0 and s0.environment == Configuration([-1.0, 2.0, 3.0])
    for m in range(4):
        assert split_m(st, m).recombine() == unlabel(st)
    with pytest.raises(IndexOutOfRange):
        split_m(st, 4)
    with pytest.raises(IndexOutOfRange):
        split_m(st, -1)


def linear_schedule():
    return TameSchedule(1.0, lambda q: q, max_level=2)


def test_tame_level_examples():
    sched = linear_schedule()
    # 2 points in the closed unit ball, 3 in the ball of radius 2
    assert tame_level(Configuration([0.5, -1.0, 1.5]), sched) == 2
    assert tame_level(Configuration([], dim=1), sched) == 1
    assert tame_level(Configuration([10.0]), sched) == 1


def test_tame_level_closed_ball():
    sched = linear_schedule()
    # the point on the unit sphere counts for the closed ball
    assert tame_level(Configuration([0.0, 1.0]), sched) == 2


def test_tame_level_monotone_and_tight():
    rng = np.random.default_rng(2)
    sched = default_schedule(1)
    for _ in range(100):
        pts = rng.uniform(-4, 4, size=rng.integers(1, 40))
        cfg = Configuration(pts)
        q = tame_level(cfg, sched)
        bigger = Configuration(np.append(pts, rng.uniform(-4, 4)))
        assert tame_level(bigger, sched) >= q
        radii = list(sched.radii(cfg))
        assert all(cfg.count_in_ball(r) <= sched.a(q, r) for r in radii)
        if q > 1:
            assert any(cfg.count_in_ball(r) > sched.a(q - 1, r) for r in radii)


def test_default_schedule_chain():
    for d in (1, 2, 3):
        assert default_schedule(d).check_chain(10, 10)


def test_is_simple():
    assert is_simple(Configuration([0.0, 1.0]), 0.0)
    assert not is_simple(Configuration([0.0, 0.0]), 0.0)
    assert not is_simple(Configuration([0.0, 1e-12]), 1e-9)


def test_configuration_text_round_trip():
    rng = np.random.default_rng(3)
    cfg = Configuration(rng.normal(size=(7, 2)))
    text = dumps_configuration(cfg)
    assert text.splitlines()[0] == "# dim=2 n=7"
    back = loads_configuration(text)
    assert np.array_equal(back.points, cfg.points)
    assert math.isclose(float(text.splitlines()[1].split()[0]), cfg.points[0, 0], rel_tol=0)
