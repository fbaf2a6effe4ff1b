"""
Disk levels from the plane-wave solver
======================================

The unit disk is the one member of the family where eigenvalues are known
in closed form: odd states are sin(m phi) J_m(kr) and k runs over the Bessel
zeros j_{m,n}.  We scan k in [1, 30], compare with the zeros, and check the
two-term Weyl count along the way.
"""

import numpy as np
from scipy.special import jn_zeros

from loclab.eigensolver import eigenvalues_in_range, mean_spacing, weyl_count
from loclab.geometry import BilliardShape

disk = BilliardShape(0.0)

# reference: every j_{m,n} below 30 with m >= 1 (odd states need m >= 1)
ref = np.sort(np.concatenate([z[(z >= 1) & (z <= 30)] for z in (jn_zeros(m, 12) for m in range(1, 40))]))

win = eigenvalues_in_range(disk, "odd", 1.0, 30.0, with_states=False)
print(f"found {win.count} odd levels, {ref.size} Bessel zeros in the window")

err = np.abs(win.levels - ref) / mean_spacing(disk, ref, "odd")
print(f"worst error: {err.max():.2e} mean spacings")

# the staircase against its smooth part
for k in (10.0, 20.0, 30.0):
    n = np.searchsorted(win.levels, k)
    print(f"k = {k:4.0f}   N(k) = {n:3d}   Weyl = {float(weyl_count(disk, k, 'odd')):6.1f}")
