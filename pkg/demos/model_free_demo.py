"""
Model-free policy gradient from simulated populations
=====================================================

Gradients are replaced by zeroth-order estimates built from the costs of
finite particle systems driven by perturbed gains. The exact cost is only
used here to report progress.
"""

from mfcpg import (GradConfig, MFRunConfig, PolicyParams, SimConfig, StepSchedule,
                   model_free_pg, solve_optimal, table1_params)
from mfcpg.pgloop import descent_fraction, moving_average

p = table1_params()
J_opt = solve_optimal(p).J_opt

cfg = MFRunConfig(
    theta0=PolicyParams([[-2.0]], [[-2.0]]),
    schedule=StepSchedule.benchmark(),
    k_max=350,
    gc=GradConfig(r=0.05, Ntilde=100, sim=SimConfig(T=1.0, n=100, N=100)),
)

###############################################################################
# One seed takes about a minute on a laptop.

tr = model_free_pg(cfg, p, seed=0)
jpop = moving_average([r.jpop for r in tr.records], 10)
for r in tr.records[::50]:
    print(f"k={r.k:3d} theta={r.theta[0, 0]:+.4f} zeta={r.zeta[0, 0]:+.4f} "
          f"J={r.J:.5f} jpop(ma10)={jpop[r.k]:.5f}")
last = tr.last
print(f"final gap ratio {(last.J - J_opt) / (tr.records[0].J - J_opt):.4f}")

###############################################################################
# Single steps are noisy: only a bit over half of them point downhill.
# Progress comes from averaging over many steps.

print(f"fraction of steps with a positive inner product against the true gradient: "
      f"{descent_fraction(tr, p):.2f}")
