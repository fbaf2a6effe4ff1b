"""
Husimi functions and localization measures
==========================================

Solve a short stretch of the odd spectrum at lambda = 0.15, project each
eigenstate onto phase space, keep the ones that live in the chaotic sea and
measure how much of the sea they fill.
"""

import numpy as np

from loclab import classical, localization
from loclab.eigensolver import eigenvalues_in_range
from loclab.geometry import BilliardShape
from loclab.husimi import husimi_grid

shape = BilliardShape(0.15)
win = eigenvalues_in_range(shape, "odd", 38.0, 42.0)
print(f"{win.count} states between k = 38 and 42 (Weyl expects {win.weyl_expected:.1f})")

grid = classical.build_chaos_grid(shape, n_collisions=2 * 10**6)
H = [husimi_grid(st).values for st in win.states]

labels = [localization.overlap_index(h, grid.gamma) for h in H]
chaotic = [h for h, c in zip(H, labels) if c.label == "chaotic"]
print(f"chaotic {len(chaotic)}, regular {len(H) - len(chaotic)}")

for st, c in list(zip(win.states, labels))[:8]:
    print(f"  k = {st.k:.6f}  M = {c.M:+.3f}  {c.label}")

I, A = localization.entropy_measure(chaotic, grid.gamma)
C = localization.correlation_measure(chaotic, window=min(20, len(chaotic)))
print(f"entropy measure A = {A:.3f}, correlation measure C = {C:.3f}")
