"""
Tame sets, cut-offs and exit times
==================================

The default level schedule a_q(r), the smooth cut-off chi that switches
on when a configuration leaves a tame set, and the exit diagnostics
along a Dyson path.
"""

import numpy as np

from ifcsim import Configuration, default_schedule
from ifcsim.diagnostics import CutoffParams, carre_du_champ_chi, cutoff_chi, kappa_exit
from ifcsim.experiments import equilibrium_run
from ifcsim.ifc import b1_report

sched = default_schedule(1)
for q in (1, 2, 3):
    print(f"a_{q}(r) for r = 1..4:", [sched.a(q, r) for r in range(1, 5)], " a_q^+(1) =", sched.a_plus(q, 1))

params = CutoffParams(schedule=sched, Q=2)
sparse = Configuration([0.5, 1.7, -3.0])
crowd = Configuration(np.linspace(-0.05, 0.05, 12))
print("chi on a sparse configuration:", cutoff_chi(sparse, 1, params))
print("chi on 12 points packed in the unit ball:", cutoff_chi(crowd, 1, params))
print("carre du champ on the crowd:", carre_du_champ_chi(crowd, 1, params))

traj, _ = equilibrium_run(16, 2.0, 0.5, 1e-3, seed=5, member=0)
rep = b1_report(traj.subsample(1e-2), 2, sched, 30, 10, 10)
print("minimal (p, q, r) over the run:", (rep.p, rep.q, rep.r), "uncovered fraction:", rep.uncovered_fraction)
print("exit from K[a_3] censored:", kappa_exit(traj, 3, sched).censored)
