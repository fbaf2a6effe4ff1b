"""
Mixed phase space of the deformed disk
======================================

At lambda = 0.15 the bounce map has a large chaotic sea with regular
islands.  A single long orbit paints the sea on a 400 x 400 grid; the
unpainted remainder is the regular part.  From there we estimate the
regular fraction and how quickly momentum spreads.

Collision counts here are far below production values so the script runs
in about a minute.
"""

import numpy as np

from loclab import classical
from loclab.geometry import BilliardShape

shape = BilliardShape(0.15)
print(f"perimeter {shape.perimeter:.6f}, area {shape.area:.6f}")

grid = classical.build_chaos_grid(shape, n_collisions=2 * 10**6)
print(f"chaotic cells: {grid.n_chaotic} of {grid.gamma.size} ({grid.chaotic_fraction:.3f})")

# crude picture of the section: '#' chaotic, '.' regular (q down, p across)
coarse = grid.gamma[::20, ::10] > 0
for row in coarse:
    print("".join("#" if c else "." for c in row))

rho = classical.estimate_rho_r(shape, grid, n_samples=1000, n_steps=1000)
print(f"rho_r = {rho.rho_r:.3f} +- {rho.stderr:.3f}")

tr = classical.transport_time(shape, grid, n_ensemble=10**4, max_collisions=10**4)
print(f"<p^2> after {tr.n[-1]} collisions: {tr.p2[-1]:.4f} (saturation {tr.saturation:.4f})")
print("N_T =", tr.N_T, "" if tr.saturated else "(still rising, so a lower bound)")

for k in (100, 2000):
    alpha, loc = classical.alpha_parameter(k, tr.N_T)
    print(f"k = {k}: alpha = {alpha:.3g}, {'localized' if loc else 'extended'} regime expected")
