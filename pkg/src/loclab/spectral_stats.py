"""Level-spacing distributions and the fit of the level repulsion exponent.

All distributions are for unfolded spectra (mean spacing 1).  Gap
probabilities ``E(S)`` satisfy ``E(0) = 1`` and ``E'' = P``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.special import gamma as gamma_fn
from scipy.special import gammaincc

log = logging.getLogger(__name__)

FAMILIES = ("poisson", "wigner", "brody", "brb")


def _check_beta(beta):
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must lie in [0, 1], got {beta}")


def _check_rho(rho_r):
    if not 0.0 <= rho_r <= 1.0:
        raise ValueError(f"rho_r must lie in [0, 1], got {rho_r}")


def brody_b(beta):
    """Scale constant fixing unit mean: Gamma((beta+2)/(beta+1))**(beta+1)."""
    return gamma_fn((beta + 2.0) / (beta + 1.0)) ** (beta + 1.0)


def brody_pdf(S, beta):
    _check_beta(beta)
    S = np.asarray(S, dtype=float)
    b = brody_b(beta)
    return (beta + 1.0) * b * S**beta * np.exp(-b * S ** (beta + 1.0))


def brody_survival(S, beta):
    """Probability that a spacing exceeds S, i.e. -E'(S) = exp(-b S^(beta+1))."""
    _check_beta(beta)
    S = np.asarray(S, dtype=float)
    return np.exp(-brody_b(beta) * S ** (beta + 1.0))


def brody_gap(S, beta):
    _check_beta(beta)
    S = np.asarray(S, dtype=float)
    b = brody_b(beta)
    a = 1.0 / (beta + 1.0)
    # upper incomplete gamma Gamma(a, x) = gammaincc(a, x) * Gamma(a)
    return b ** (-a) * a * gamma_fn(a) * gammaincc(a, b * S ** (beta + 1.0))


def wigner_pdf(S):
    S = np.asarray(S, dtype=float)
    return 0.5 * np.pi * S * np.exp(-0.25 * np.pi * S * S)


def poisson_pdf(S):
    return np.exp(-np.asarray(S, dtype=float))


def brb_gap(S, beta, rho_r):
    _check_beta(beta)
    _check_rho(rho_r)
    S = np.asarray(S, dtype=float)
    rho_c = 1.0 - rho_r
    return np.exp(-rho_r * S) * brody_gap(rho_c * S, beta)


def brb_pdf(S, beta, rho_r):
    _check_beta(beta)
    _check_rho(rho_r)
    S = np.asarray(S, dtype=float)
    rc = 1.0 - rho_r
    x = rc * S
    return np.exp(-rho_r * S) * (rho_r**2 * brody_gap(x, beta)
                                 + 2.0 * rho_r * rc * brody_survival(x, beta)
                                 + rc**2 * brody_pdf(x, beta))


def brb_cdf(S, beta, rho_r):
    """Cumulative spacing distribution 1 + E'(S)."""
    _check_beta(beta)
    _check_rho(rho_r)
    S = np.asarray(S, dtype=float)
    rc = 1.0 - rho_r
    x = rc * S
    return 1.0 - np.exp(-rho_r * S) * (rho_r * brody_gap(x, beta) + rc * brody_survival(x, beta))


@dataclass(frozen=True)
class SpacingModel:
    """A parametrized spacing distribution; normalization and unit mean are checked on construction."""

    family: str
    beta: float = 1.0
    rho_r: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        _check_beta(self.beta)
        _check_rho(self.rho_r)
        norm = quad(self.pdf, 0.0, np.inf, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
        mean = quad(lambda s: s * self.pdf(s), 0.0, np.inf, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
        if abs(norm - 1.0) > 1e-8 or abs(mean - 1.0) > 1e-8:
            raise ArithmeticError(f"{self}: norm {norm!r}, mean {mean!r}")

    @property
    def rho_c(self):
        return 1.0 - self.rho_r

    @property
    def _params(self):
        if self.family == "poisson":
            return 0.0, 1.0
        if self.family == "wigner":
            return 1.0, 0.0
        if self.family == "brody":
            return self.beta, 0.0
        return self.beta, self.rho_r

    def pdf(self, S):
        return brb_pdf(S, *self._params)

    def gap(self, S):
        return brb_gap(S, *self._params)

    def cdf(self, S):
        return brb_cdf(S, *self._params)


@dataclass
class UnfoldedSpectrum:
    spacings: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.spacings = np.asarray(self.spacings, dtype=float)
        if self.spacings.size == 0:
            raise ValueError("empty spectrum")
        if np.any(self.spacings <= 0):
            raise ValueError("spacings must be positive")

    def __len__(self):
        return self.spacings.size


def unfold(levels, shape, parity="odd", min_levels=50) -> UnfoldedSpectrum:
    """Map levels through the two-term Weyl count and rescale spacings to unit mean."""
    from .eigensolver import weyl_count

    levels = np.asarray(levels, dtype=float)
    if levels.size < min_levels:
        raise ValueError(f"unfolding needs at least {min_levels} levels, got {levels.size}")
    if np.any(np.diff(levels) <= 0):
        raise ValueError("levels must be strictly increasing")
    x = weyl_count(shape, levels, parity=parity)
    s = np.diff(x)
    return UnfoldedSpectrum(s / s.mean(), meta={"lambda": shape.lam, "parity": parity,
                                                 "k_lo": float(levels[0]), "k_hi": float(levels[-1]),
                                                 "raw_mean": float(s.mean())})


def pooled(spectra) -> UnfoldedSpectrum:
    """Concatenate independently unfolded spacing sequences (e.g. both parity classes)."""
    s = np.concatenate([sp.spacings for sp in spectra])
    return UnfoldedSpectrum(s / s.mean(), meta={"parts": [sp.meta for sp in spectra]})


def ecdf(spacings):
    x = np.sort(np.asarray(spacings, dtype=float))
    return x, np.arange(1, x.size + 1) / x.size


def spacing_histogram(spectrum, n_bins=40, s_max=None):
    """Unit-area histogram and exact ECDF of the spacings.

    Returns ``centers, density, edges, ecdf_x, ecdf_y``.
    """
    s = spectrum.spacings if isinstance(spectrum, UnfoldedSpectrum) else np.asarray(spectrum, float)
    if s.size == 0:
        raise ValueError("empty spectrum")
    hi = s_max if s_max is not None else max(float(s.max()), 1e-12)
    edges = np.linspace(0.0, hi, n_bins + 1)
    counts, _ = np.histogram(s, bins=edges)
    density = counts / (s.size * np.diff(edges))
    centers = 0.5 * (edges[1:] + edges[:-1])
    x, y = ecdf(s)
    return centers, density, edges, x, y


def golden_section(f, lo, hi, tol=1e-4):
    """Minimize a unimodal scalar function on [lo, hi]."""
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    # the end points are candidates when the minimum sits on the boundary
    cands = [(f(x), x), (f(lo), lo), (f(hi), hi)]
    return min(cands)[1]


@dataclass
class FitResult:
    beta: float
    rho_r: float
    n_spacings: int
    residual: float
    ks: float

    def report(self) -> str:
        return "\n".join(f"{k} = {v}" for k, v in (
            ("beta", f"{self.beta:.6f}"), ("rho_r", f"{self.rho_r:.6f}"),
            ("n_spacings", self.n_spacings), ("residual", f"{self.residual:.6e}"),
            ("KS", f"{self.ks:.6e}"))) + "\n"


def _ecdf_residual(x, beta, rho_r):
    n = x.size
    F = brb_cdf(x, beta, rho_r)
    mid = (np.arange(1, n + 1) - 0.5) / n
    return float(np.sqrt(np.mean((F - mid) ** 2)))


def ks_statistic(x, beta, rho_r):
    x = np.sort(x)
    n = x.size
    F = brb_cdf(x, beta, rho_r)
    hi = np.arange(1, n + 1) / n
    lo = np.arange(0, n) / n
    return float(max(np.max(hi - F), np.max(F - lo)))


def fit_beta(spectrum, rho_r: float, min_spacings: int = 1000, tol: float = 1e-4) -> FitResult:
    """Fit the Brody exponent of the BRB distribution at fixed regular fraction.

    The objective is the root-mean-square distance between the empirical and
    model cumulative distributions at the sample points.
    """
    _check_rho(rho_r)
    s = spectrum.spacings if isinstance(spectrum, UnfoldedSpectrum) else np.asarray(spectrum, float)
    if s.size < min_spacings:
        raise ValueError(f"fit_beta needs at least {min_spacings} spacings, got {s.size}")
    if s.size < 10**4:
        log.warning("fitting beta on only %d spacings", s.size)
    if np.ptp(s) < 1e-12 * max(abs(s.mean()), 1e-300):
        raise ValueError("degenerate spectrum: all spacings equal")
    x = np.sort(s / s.mean())
    beta = golden_section(lambda b: _ecdf_residual(x, b, rho_r), 0.0, 1.0, tol)
    return FitResult(beta=float(beta), rho_r=float(rho_r), n_spacings=int(x.size),
                     residual=_ecdf_residual(x, beta, rho_r), ks=ks_statistic(x, beta, rho_r))
