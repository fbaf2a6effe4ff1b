"""Localization of chaotic eigenstates in the quadratic conformal-map billiard.

Modules: ``geometry`` (boundary), ``classical`` (bounce map, chaos grid,
regular fraction, transport), ``eigensolver`` (plane-wave spectra),
``husimi`` (phase-space densities), ``localization`` (A, C, M),
``spectral_stats`` (unfolding, Brody/BRB fits) and ``pipeline`` (cached
stages behind the ``loclab`` command).
"""

from .geometry import BilliardShape

__all__ = ["BilliardShape"]
__version__ = "0.1.0"
