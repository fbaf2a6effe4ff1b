"""
Fitting the Brody exponent
==========================

Draw spacings from the Berry-Robnik-Brody distribution with a known
exponent, then recover it by fitting the cumulative distribution.
"""

import numpy as np
from scipy.interpolate import interp1d

from loclab.spectral_stats import brb_cdf, fit_beta, spacing_histogram, brb_pdf

rho_r = 0.175
rng = np.random.default_rng(1)

S = np.linspace(0, 12, 20001)
for beta in (0.2, 0.5, 0.8):
    inverse = interp1d(brb_cdf(S, beta, rho_r), S)
    u = rng.uniform(0, brb_cdf(S[-1], beta, rho_r), 20000)
    sample = inverse(u)
    fit = fit_beta(sample, rho_r)
    print(f"true beta {beta:.2f}  fitted {fit.beta:.3f}  KS {fit.ks:.4f}")

centers, density, *_ = spacing_histogram(sample, n_bins=12, s_max=3.0)
print("\n  S     histogram  model")
for c, d in zip(centers, density):
    print(f"{c:5.2f}  {d:9.3f}  {float(brb_pdf(c, 0.8, rho_r)):6.3f}")
