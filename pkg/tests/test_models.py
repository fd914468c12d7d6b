import math
import zlib

import numpy as np
import pytest

from ifcsim.config import LabeledState
from ifcsim.errors import CollisionTooClose, NonConvergentSum
from ifcsim.models import (
    BumpSkewPotential,
    InteractionSpec,
    Kind,
    drift,
    drift_jacobian,
    drift_skew,
    drift_tail_decomposition,
    finite_N_drift,
)

SPECS = {
    "SineBeta": InteractionSpec(Kind.SINE_BETA, dim=1, beta=2.0),
    "Bessel": InteractionSpec(Kind.BESSEL, dim=1, alpha=1.5),
    "GinibreRep1": InteractionSpec(Kind.GINIBRE_REP1, dim=2),
    "GinibreRep2": InteractionSpec(Kind.GINIBRE_REP2, dim=2),
    "LennardJones": InteractionSpec(Kind.LENNARD_JONES, dim=3, beta=1.0),
    "Riesz": InteractionSpec(Kind.RIESZ, dim=2, beta=1.0, riesz_a=3.0),
    "RuelleCompact": InteractionSpec(Kind.RUELLE_COMPACT, dim=2),
    "SkewPoisson": InteractionSpec(Kind.SKEW_POISSON, dim=3),
}


def random_state(spec, rng, n_env=6, min_dist=0.3):
    d = spec.dim
    while True:
        x = rng.uniform(-1.5, 1.5, d)
        env = rng.uniform(-2.5, 2.5, (n_env, d))
        if spec.kind is Kind.BESSEL:
            x = np.abs(x) + 0.2
            env = np.abs(env) + 0.2
        if np.min(np.linalg.norm(env - x, axis=1)) > min_dist:
            return x, env


def fd_jacobian(spec, x, env, h=1e-6):
    d = len(x)
    jac = np.zeros((d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        jac[:, j] = (drift(x + e, env, spec).vector - drift(x - e, env, spec).vector) / (2 * h)
    return jac


def test_sine_drift_pair_sum():
    spec = SPECS["SineBeta"]
    expected = 1.0 / (1.0 - (-1.0)) + 1.0 / (1.0 - 0.0)
    assert drift([1.0], [[-1.0], [0.0]], spec).vector[0] == pytest.approx(expected, rel=1e-12)
    assert drift([0.0], [[-0.7], [0.7]], spec).vector[0] == 0.0


def test_ginibre_rep2_examples():
    spec = SPECS["GinibreRep2"]
    assert drift([1.0, 0.0], np.zeros((0, 2)), spec).vector.tolist() == [-1.0, 0.0]
    out = drift([1.0, 0.0], [[0.0, 0.0]], spec).vector
    np.testing.assert_allclose(out, [-1.0 + 1.0, 0.0], atol=1e-12)


def test_bessel_example():
    spec = InteractionSpec(Kind.BESSEL, dim=1, alpha=1.0)
    expected = 1.0 / (2.0 * 1.0) + 1.0 / (1.0 - 4.0)
    assert drift([1.0], [[4.0]], spec).vector[0] == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(1.0 / 6.0, rel=1e-12)


def test_lennard_jones_unit_neighbour():
    spec = InteractionSpec(Kind.LENNARD_JONES, dim=3, beta=1.0)
    for axis in range(3):
        e = np.zeros(3)
        e[axis] = 1.0
        # neighbour at -e, so x - y = e
        out = drift(np.zeros(3), [-e], spec).vector
        np.testing.assert_allclose(out, 0.5 * (12.0 - 6.0) * e, rtol=1e-12)


def test_riesz_direct():
    spec = SPECS["Riesz"]
    x, y = np.array([0.3, -0.2]), np.array([1.1, 0.4])
    u = x - y
    expected = 0.5 * u / np.linalg.norm(u) ** 5
    np.testing.assert_allclose(drift(x, [y], spec).vector, expected, rtol=1e-12)


def test_collision_refused():
    with pytest.raises(CollisionTooClose):
        drift([0.0], [[1e-12]], SPECS["SineBeta"])
    with pytest.raises(CollisionTooClose):
        drift([0.0], np.zeros((0, 1)), SPECS["Bessel"])


def test_nonconvergent_sum_flagged():
    spec = SPECS["SineBeta"]
    env = [[0.5], [1.5], [-3.5]]
    with pytest.raises(NonConvergentSum):
        drift([0.0], env, spec, cutoff=2.0)
    assert drift([0.0], env, spec, cutoff=2.0, check_convergence=False).convergence_gap > 0


def test_ruelle_cutoff_independent():
    spec = SPECS["RuelleCompact"]
    rng = np.random.default_rng(4)
    x, env = random_state(spec, rng)
    full = drift(x, env, spec)
    cut = drift(x, env, spec, cutoff=4.0)
    assert np.array_equal(full.vector, cut.vector)
    assert cut.convergence_gap == 0.0


def test_sine_translation_covariant():
    spec = SPECS["SineBeta"]
    rng = np.random.default_rng(5)
    for _ in range(20):
        x, env = random_state(spec, rng)
        h = 0.25
        a = drift(x, env, spec).vector
        b = drift(x + h, env + h, spec).vector
        np.testing.assert_allclose(a, b, rtol=1e-12)


def test_tail_decomposition():
    spec = SPECS["GinibreRep2"]
    near, tail = drift_tail_decomposition([0.5, 0.0], np.zeros((0, 2)), spec, 1.0, 2.0)
    assert np.all(near.vector == 0) and tail.vector.tolist() == [-0.5, 0.0]
    sine = SPECS["SineBeta"]
    env = np.array([[-0.5], [0.4], [1.2]])
    near, tail = drift_tail_decomposition([0.1], env, sine, 1.0, 5.0)
    assert np.all(tail.vector == 0)
    near, tail = drift_tail_decomposition([3.0], env, sine, 1.0, 5.0)
    assert np.all(near.vector == 0)
    assert np.array_equal(tail.vector, drift([3.0], env, sine).vector)
    rng = np.random.default_rng(6)
    for name, spec in SPECS.items():
        x, env = random_state(spec, rng)
        near, tail = drift_tail_decomposition(x, env, spec, 2.0, 1.0 + rng.uniform(1.0, 2.0))
        np.testing.assert_allclose(near.vector + tail.vector, drift(x, env, spec).vector, rtol=1e-13, atol=1e-13)


def test_jacobian_examples():
    assert drift_jacobian([1.0], [[0.0]], SPECS["SineBeta"])[0, 0] == pytest.approx(-1.0, rel=1e-12)
    assert drift_jacobian([1.0], np.zeros((0, 1)), SPECS["SineBeta"])[0, 0] == 0.0
    assert np.array_equal(drift_jacobian([0.3, 0.1], np.zeros((0, 2)), SPECS["GinibreRep2"]), -np.eye(2))


@pytest.mark.parametrize("name", sorted(SPECS))
def test_jacobian_matches_finite_differences(name):
    spec = SPECS[name]
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    worst = 0.0
    for _ in range(100):
        x, env = random_state(spec, rng)
        jac = drift_jacobian(x, env, spec)
        fd = fd_jacobian(spec, x, env)
        worst = max(worst, np.max(np.abs(jac - fd)) / max(np.max(np.abs(jac)), 1.0))
    assert worst < 1e-5


def test_skew_examples():
    spec = SPECS["SkewPoisson"]
    assert np.all(drift_skew(np.zeros(3), np.zeros((0, 3)), spec).vector == 0)
    assert np.all(drift_skew(np.zeros(3), [[2.0, 0.0, 0.0]], spec).vector == 0)


def test_skew_potential_is_skew():
    pot = BumpSkewPotential()
    u = np.random.default_rng(7).uniform(-0.6, 0.6, (10, 3))
    g = pot.gamma_matrix(u)
    np.testing.assert_array_equal(g, -np.swapaxes(g, -1, -2))


def test_skew_divergence_vanishes():
    pot = BumpSkewPotential()
    rng = np.random.default_rng(8)
    h = 1e-5
    for _ in range(20):
        u = rng.uniform(-0.6, 0.6, 3)
        div = 0.0
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            div += (pot.gamma0(u + e)[k] - pot.gamma0(u - e)[k]) / (2 * h)
        assert abs(div) < 1e-6
        assert abs(np.trace(pot.gamma0_jacobian(u))) < 1e-12


def test_finite_N_drift():
    spec = SPECS["SineBeta"]
    st = LabeledState([[0.0], [1.0]])
    assert finite_N_drift(2, st, spec, 0.0).vector[0] == pytest.approx(1.0, rel=1e-12)
    c = 0.7
    assert finite_N_drift(1, LabeledState([[2.0]]), spec, c).vector[0] == pytest.approx(-c * 2.0)
    assert finite_N_drift(2, LabeledState([[-1.0], [0.0], [1.0]]), spec, c).vector[0] == 0.0


def test_spec_domains():
    with pytest.raises(ValueError):
        InteractionSpec(Kind.BESSEL, dim=2)
    with pytest.raises(ValueError):
        InteractionSpec(Kind.GINIBRE_REP2, dim=1)
    with pytest.raises(ValueError):
        InteractionSpec(Kind.RIESZ, dim=2, riesz_a=2.0)
    with pytest.raises(ValueError):
        Kind.parse("bogus")
    assert InteractionSpec(Kind.SINE_BETA).preserves_order
    assert not math.isfinite(InteractionSpec(Kind.SINE_BETA).interaction_range())
