"""
Ginibre drifts and a skew perturbation
======================================

The Ginibre drift has two representations: a symmetric pair sum over
|x - y| < R, and -x plus a sum over |y| < R.  On equilibrium samples the
two agree better as R grows.  The SkewPoisson model adds a
divergence-free interaction that keeps the Poisson law invariant but
breaks time symmetry.
"""

import numpy as np

from ifcsim import InteractionSpec, Kind, drift
from ifcsim.experiments import ginibre_equilibrium
from ifcsim.models import drift_skew

rep1 = InteractionSpec(Kind.GINIBRE_REP1, dim=2)
rep2 = InteractionSpec(Kind.GINIBRE_REP2, dim=2)
pts = ginibre_equilibrium(200, seed=9).points
i = int(np.argmin(np.sum(pts * pts, axis=1)))
x, env = pts[i], np.delete(pts, i, axis=0)
for R in (2.0, 4.0, 6.0):
    a = drift(x, env, rep1, R, check_convergence=False).vector
    b = drift(x, env, rep2, R, check_convergence=False).vector
    print(f"R={R:g}  rep1 {np.round(a, 3)}  rep2 {np.round(b, 3)}  gap {np.linalg.norm(a - b):.3f}")

skew = InteractionSpec(Kind.SKEW_POISSON, dim=3)
y = np.zeros(3)
near = np.array([[0.3, 0.1, 0.0], [-0.2, 0.25, 0.1]])
print("skew drift at the origin:", drift_skew(y, near, skew).vector)
