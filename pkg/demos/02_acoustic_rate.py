"""
Decay rate of the acoustic part in a large 2D box
=================================================

Linear sweep over the Mach number with data of fixed critical size; the
fitted slope of the acoustic norm against eps nu is compared with the
exponent c (1/2 - 1/p).
"""

import numpy as np

from lowmach.harness import DataSpec, SweepConfig, measure_rates, run_sweep
from lowmach.solvers import StepperConfig
from lowmach.spectral import Grid

g = Grid(2, 128, 8.0, normalized=False)
spec = DataSpec(g, p=3.0, r=1.0, low_acoustic=0.1, Pu=0.1, band=(1.0, 6.0), seed=3)
sweep = SweepConfig(eps=(0.2, 0.1, 0.05, 0.025), nu=1.0, mu=0.5, p=3.0, r=1.0, c=0.5, T=4.0,
                    family="critical", reference=False)
result = run_sweep(spec, sweep, StepperConfig(dt=0.2, nonlinear=False))
rep = measure_rates(result, "acoustic-decay")

print("eps       eps_tilde  norm")
for e, et, n in zip(rep.eps, rep.eps_tilde, rep.norms):
    print(f"{e:<9g} {et:<10g} {n:.6e}")
print(f"fitted slope {rep.slope:.4f}, target {rep.target:.4f}")
print("pairwise slopes", np.round(rep.pairwise, 4))
