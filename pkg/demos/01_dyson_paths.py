"""
Dyson Brownian motion from equilibrium
======================================

Sample a finite Dyson gas at unit bulk density, run the SDE with
Euler-Maruyama and watch the smallest gap through the Lyapunov
function Upsilon.
"""

import numpy as np

from ifcsim import SolverConfig, simulate
from ifcsim.diagnostics import collision_monitor
from ifcsim.experiments import dyson_equilibrium, dyson_spec

n, beta = 16, 2.0
spec = dyson_spec(n, beta)
print("confinement c =", spec.confinement)

# an equilibrium start from the log-gas Metropolis sampler
x0 = dyson_equilibrium(n, beta, seed=1).positions
print("initial points:", np.round(x0[:, 0], 2))

# one path; near-collisions are resolved by sub-stepping on a refined Brownian path
traj, bp = simulate(x0, spec, SolverConfig(dt=1e-3, T=1.0, seed=1))
substeps = sum(e[0] == "substep" for e in traj.events)
print("steps:", len(traj.times) - 1, "substep events:", substeps)

# labels follow distance from the origin; the left-to-right order of labels never changes
ranks = np.argsort(traj.positions[:, :, 0], axis=1)
print("no crossings:", bool(np.all(ranks == ranks[0])))

mon = collision_monitor(traj)
print("min gap over the run:", mon.min_gaps[0].min())
print("Upsilon(min gap) at 0 and T:", mon.upsilon_start, mon.upsilon_end)
