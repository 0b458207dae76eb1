"""
Dyadic blocks and Besov norms of a few simple fields
====================================================

"""

import numpy as np

from lowmach.besov import BesovSpec, besov_norm, block_norms
from lowmach.littlewood_paley import SplitConfig, dyadic_index, split_low_high
from lowmach.spectral import Grid, from_physical

# a 2D periodic box of side 2 pi, 64 points per direction
g = Grid(2, 64)
x1, x2 = g.coordinates

# one Fourier mode sits in one or two dyadic blocks
f = from_physical(np.cos(5 * x1), g)
js, vals = block_norms(f, 2.0)
for j, v in zip(js, vals):
    if v > 1e-14:
        print(f"block {j:3d}: ||Delta_j f||_L2 = {v:.6f}")
print("dyadic index of |xi| = 5:", dyadic_index(5.0))

# the norm weights block j by 2^{js}
for s in (-1.0, 0.0, 1.0):
    val = besov_norm(f, BesovSpec(s, 2.0, 1)).value
    print(f"s = {s:+.0f}: norm = {val:.6f}, sum of 2^(js) ||Delta_j f|| = {np.sum(2.0 ** (s * js) * vals):.6f}")

# low/high split at threshold eps nu
hf = from_physical(np.cos(2 * x1) + 0.1 * np.cos(20 * x2), g)
lo, hi = split_low_high(hf, SplitConfig(j0=3, alpha=4.0))
print("low part L2:", lo.l2(), " high part L2:", hi.l2())
