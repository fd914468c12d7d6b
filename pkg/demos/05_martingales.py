"""
Martingale residuals and time reversal
======================================

For a cylinder function F the path F(w_t) splits into a martingale and
a drift integral.  The Ito residual measures that split on a discrete
path; the Lyons-Zheng residual rebuilds F from forward and backward
martingales.  Both shrink with dt on the same Brownian path.
"""

from ifcsim import BrownianPath, SolverConfig, simulate
from ifcsim.analysis import (CylinderFunction, increment_statistic, ito_residual, lyons_zheng_residual, qv_check,
                             reversibility_test)
from ifcsim.experiments import dyson_equilibrium, dyson_spec, equilibrium_run

n, T = 8, 0.2
spec = dyson_spec(n)
x0 = dyson_equilibrium(n, 2.0, seed=7).positions
bp = BrownianPath.generate(n, 1, T, 1e-3 / 16, seed=7)
F = CylinderFunction.gap_gaussian(3, 4)
for dt in (4e-3, 2e-3, 1e-3):
    traj, _ = simulate(x0, spec, SolverConfig(dt=dt, T=T, seed=7), bp)
    print(f"dt={dt:g}  ito {ito_residual(F, traj, bp, spec):.2e}  lz {lyons_zheng_residual(F, traj, bp, spec):.2e}")

q = qv_check(CylinderFunction.coordinate(0), traj, bp, spec)
print("realized vs predicted quadratic variation of x_1:", q.realized, q.predicted)

# at equilibrium the law of a path and of its time reversal agree
runs = [equilibrium_run(n, 2.0, 0.2, 1e-3, seed=8, member=k)[0] for k in range(40)]
p = reversibility_test(runs, increment_statistic(F))
print("KS p-value, forward vs reversed increments:", round(p, 3))
