"""
How noisy is the one-point gradient estimate?
=============================================

Each estimate averages Ntilde terms J_i U_i scaled by d / r^2. The cost J_i
itself is of order 0.1 and barely depends on the perturbation, so the
spread of a single estimate is roughly (d / r) J / sqrt(Ntilde).
"""

import numpy as np

from mfcpg import GradConfig, PolicyParams, SimConfig, gradient, table1_params
from mfcpg.zograd import estimator_diagnostics

p = table1_params()
pol = PolicyParams([[-2.0]], [[-2.0]])
g1, g2 = gradient(pol, p)
print(f"exact gradient ({g1[0, 0]:.5f}, {g2[0, 0]:.5f})")

gc = GradConfig(r=0.05, Ntilde=100, sim=SimConfig(T=1.0, n=100, N=100))
diag = estimator_diagnostics(pol, p, gc, repeats=40, sensitivity=False)
print(f"mean of 40 estimates {np.round(diag['mean'], 4)}, spread {np.round(diag['spread'], 3)}")
print(f"back-of-envelope spread {1 / 0.05 * 0.0956 / np.sqrt(100):.3f}")
print(f"share within 1e-2 of exact: {diag['within_1e2']:.2f}")

###############################################################################
# Spread shrinks like 1 / sqrt(Ntilde).

for nt in (25, 100, 400):
    g = GradConfig(r=0.05, Ntilde=nt, sim=SimConfig(T=1.0, n=50, N=50))
    d = estimator_diagnostics(pol, p, g, repeats=20, sensitivity=False)
    print(f"Ntilde={nt:4d}: spread {np.round(d['spread'], 3)}")
