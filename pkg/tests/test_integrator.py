import io
import math

import numpy as np
import pytest
from scipy import stats

from ifcsim.errors import CollisionAbort, DomainViolation, IndivisibleFactor, InsufficientEnsemble
from ifcsim.experiments import dyson_equilibrium, dyson_spec
from ifcsim.integrator import (
    BrownianPath,
    SolverConfig,
    Trajectory,
    coarsen,
    moment_bound_probe,
    observed_order,
    read_brownian_csv,
    read_trajectory_csv,
    run_parallel,
    simulate,
    write_brownian_csv,
    write_trajectory_csv,
)
from ifcsim.models import InteractionSpec, Kind
from ifcsim.rng import member_seed

FREE = InteractionSpec(Kind.FREE, dim=2)


def test_free_motion_is_summed_noise():
    x0 = np.array([[0.5, -1.0], [2.0, 0.0]])
    for dt in (0.1, 0.025):
        solver = SolverConfig(dt=dt, T=1.0, seed=3)
        traj, bp = simulate(x0, FREE, solver)
        k = round(dt / bp.finest_dt).bit_length() - 1
        x = x0.copy()
        for inc in bp.level(k):
            x = x + inc
        assert np.array_equal(traj.positions[-1], x)


def ou_reference(x0, bp, T):
    """Exact OU solution exp(-t) x0 + int exp(-(t - s)) dB_s, the integral by midpoint sums of the finest noise."""
    h = bp.finest_dt
    s = (np.arange(bp.n_steps) + 0.5) * h
    inc = bp.increments[:, 0, :]
    out = []
    for t in np.linspace(0, T, 17):
        mask = s < t
        w = np.exp(-(t - s[mask]))[:, None]
        out.append(math.exp(-t) * x0 + (w * inc[mask]).sum(axis=0))
    return np.array(out)


def test_ou_strong_order():
    spec = InteractionSpec(Kind.GINIBRE_REP2, dim=2)
    T = 1.0
    dts = [2.0**-4, 2.0**-5, 2.0**-6, 2.0**-7]
    errs = []
    for k in range(20):
        bp = BrownianPath.generate(1, 2, T, 2.0**-16, seed=member_seed(21, k))
        x0 = np.array([1.0, -0.5])
        ref = ou_reference(x0, bp, T)
        row = []
        for dt in dts:
            traj, _ = simulate(x0[None, :], spec, SolverConfig(dt=dt, T=T), bp)
            stride = round((T / 16) / dt)
            row.append(np.max(np.linalg.norm(traj.positions[::stride, 0] - ref, axis=1)))
        errs.append(row)
    assert observed_order(dts, np.median(errs, axis=0)) >= 0.9


def test_simulate_deterministic():
    x0 = dyson_equilibrium(8, 2.0, seed=1)
    spec = dyson_spec(8)
    solver = SolverConfig(dt=1e-3, T=0.1, seed=7)
    a, bpa = simulate(x0, spec, solver)
    b, bpb = simulate(x0, spec, solver)
    assert a.equal_paths(b) and bpa == bpb
    fa, fb = io.StringIO(), io.StringIO()
    write_trajectory_csv(a, fa)
    write_trajectory_csv(b, fb)
    assert fa.getvalue() == fb.getvalue()


def test_coarsen():
    bp = BrownianPath.generate(3, 2, 1.0, 1.0 / 64, seed=2)
    assert coarsen(bp, 1) == bp
    np.testing.assert_allclose(coarsen(bp, 8).increments.sum(axis=0), bp.increments.sum(axis=0), atol=1e-13)
    assert np.array_equal(coarsen(bp, 64).increments[0], bp.level(6)[0])
    assert coarsen(coarsen(bp, 2), 2) == coarsen(bp, 4)
    assert coarsen(bp, 4).finest_dt == 4 * bp.finest_dt
    with pytest.raises(IndivisibleFactor):
        coarsen(bp, 3)
    with pytest.raises(IndivisibleFactor):
        coarsen(bp, 128)


def test_coarsened_variance():
    bp = BrownianPath.generate(1, 1, 1.0, 1.0 / 2**14, seed=4)
    for factor in (4, 16):
        inc = coarsen(bp, factor).increments.ravel()
        n = len(inc)
        target = factor * bp.finest_dt
        lo, hi = stats.chi2.ppf([0.005, 0.995], n)
        assert lo < np.sum(inc**2) / target < hi


def test_finest_increment_statistics():
    bp = BrownianPath.generate(4, 2, 1.0, 1e-3, seed=5)
    inc = bp.increments.ravel()
    n = len(inc)
    sd = math.sqrt(bp.finest_dt)
    assert abs(inc.mean()) < 4 * sd / math.sqrt(n)
    lo, hi = stats.chi2.ppf([0.005, 0.995], n - 1)
    assert lo < (n - 1) * inc.var(ddof=1) / bp.finest_dt < hi


def test_bridge_refinement_is_consistent():
    bp = BrownianPath.generate(2, 1, 1.0, 0.25, seed=6)
    for idx in range(4):
        left, right = bp.increment(-1, 2 * idx), bp.increment(-1, 2 * idx + 1)
        np.testing.assert_allclose(left + right, bp.increment(0, idx), atol=1e-15)
        quarters = sum(bp.increment(-2, 4 * idx + j) for j in range(4))
        np.testing.assert_allclose(quarters, bp.increment(0, idx), atol=1e-15)
    again = BrownianPath(bp.increments, 0.25, seed=6)
    assert np.array_equal(again.increment(-3, 5), bp.increment(-3, 5))


def test_dyson_order_preserved():
    n = 8
    x0 = dyson_equilibrium(n, 2.0, seed=2)
    traj, _ = simulate(x0, dyson_spec(n), SolverConfig(dt=2e-3, T=0.5, seed=8))
    order0 = np.argsort(traj.positions[0, :, 0])
    for k in range(len(traj.times)):
        assert np.array_equal(np.argsort(traj.positions[k, :, 0]), order0)


def test_self_consistency_under_halving():
    n = 8
    spec = dyson_spec(n)
    dts = [4e-3, 2e-3, 1e-3]
    T = 0.2
    errs = []
    for k in range(10):
        x0 = dyson_equilibrium(n, 2.0, seed=3, member=k)
        bp = BrownianPath.generate(n, 1, T, 5e-4 / 64, seed=member_seed(3, k))
        ref, _ = simulate(x0, spec, SolverConfig(dt=5e-4, T=T), bp)
        row = []
        for dt in dts:
            traj, _ = simulate(x0, spec, SolverConfig(dt=dt, T=T), bp)
            row.append(np.max(np.abs(traj.positions - ref.subsample(dt).positions)))
        errs.append(row)
    med = np.median(errs, axis=0)
    assert np.all(np.diff(med) < 0)
    assert observed_order(dts, med) >= 0.4


def test_domain_violation_for_bessel():
    spec = InteractionSpec(Kind.BESSEL, dim=1, alpha=1.0)
    bp = BrownianPath(np.array([[[-1.0]]]), 0.01)
    solver = SolverConfig(dt=0.01, T=0.01, finest_factor=1, max_substep_depth=0)
    with pytest.raises(DomainViolation) as info:
        simulate(np.array([[0.01]]), spec, solver, bp)
    assert info.value.events[-1][0] == "abort"


def test_collision_abort_on_crossing():
    spec = InteractionSpec(Kind.SINE_BETA, dim=1)
    bp = BrownianPath(np.array([[[1.0], [-1.0]]]), 0.01)
    solver = SolverConfig(dt=0.01, T=0.01, finest_factor=1, max_substep_depth=0)
    with pytest.raises(CollisionAbort):
        simulate(np.array([[0.0], [0.1]]), spec, solver, bp)


def test_refinement_rescues_crossing():
    spec = InteractionSpec(Kind.SINE_BETA, dim=1)
    bp = BrownianPath(np.array([[[0.3], [-0.3]]]), 0.01, seed=1)
    solver = SolverConfig(dt=0.01, T=0.01, finest_factor=1, min_gap_substep_threshold=1e-6)
    traj, _ = simulate(np.array([[0.0], [0.5]]), spec, solver, bp)
    assert traj.positions[-1, 0, 0] < traj.positions[-1, 1, 0]
    assert any(e[0] == "refine" for e in traj.events)


def test_label_warning_logged():
    bp = BrownianPath(np.array([[[5.0, 0.0], [0.0, 0.0]]]), 0.01)
    traj, _ = simulate(np.zeros((2, 2)) + [[0.0, 0.0], [3.0, 0.0]], FREE,
                       SolverConfig(dt=0.01, T=0.01, finest_factor=1), bp)
    assert any(e[0] == "label_warning" and e[2] == 0 for e in traj.events)


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(dt=0.3, T=1.0)
    with pytest.raises(ValueError):
        SolverConfig(scheme="rk4")
    with pytest.raises(IndivisibleFactor):
        SolverConfig(finest_factor=3)
    assert SolverConfig(dt=0.04).substep_threshold == pytest.approx(10 * math.sqrt(0.04))


def bm_ensemble(size, T=1.0, dt=1e-2, seed=0):
    out = []
    for k in range(size):
        bp = BrownianPath.generate(1, 1, T, dt, seed=member_seed(seed, k))
        out.append(Trajectory(np.arange(bp.n_steps + 1) * dt, bp.path(), []))
    return out


def test_moment_probe_brownian():
    fit = moment_bound_probe(bm_ensemble(200), m=1, a=math.inf)
    assert abs(fit.slope - 2.0) <= 0.1
    assert fit.constant == pytest.approx(3.0, rel=0.15)


def test_moment_probe_degenerate_inputs():
    ens = bm_ensemble(100)
    with pytest.raises(InsufficientEnsemble):
        moment_bound_probe(ens, 1, math.inf, lags=[1])
    with pytest.raises(InsufficientEnsemble):
        moment_bound_probe(ens[:10], 1, math.inf)


def test_csv_round_trip():
    solver = SolverConfig(dt=0.05, T=0.2, seed=9)
    traj, bp = simulate(np.array([[0.1, 0.2], [1.0, -1.0]]), FREE, solver)
    buf = io.StringIO()
    write_trajectory_csv(traj, buf)
    text = buf.getvalue()
    assert text.startswith("# model=Free N=2 dt=0.050000000000000003 T=0.20000000000000001 seed=9\n")
    back = read_trajectory_csv(io.StringIO(text))
    assert np.array_equal(back.positions, traj.positions)
    buf = io.StringIO()
    write_brownian_csv(bp, buf, "Free")
    assert read_brownian_csv(io.StringIO(buf.getvalue())) == bp


def _square(v):
    return v * v


def test_run_parallel_keeps_order():
    jobs = list(range(7))
    assert run_parallel(_square, jobs, workers=3) == [j * j for j in jobs]
