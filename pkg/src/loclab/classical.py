"""Classical dynamics on the surface of section.

Birkhoff coordinates are ``(s, p)`` with ``s`` the arclength of a collision and
``p`` the tangential component of the outgoing unit velocity.  The chaotic
cell grid lives on the reduced quadrant ``s in [0, L/2], p in [0, 1]``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import _bounce
from ._parallel import run_chunks, split
from .geometry import BilliardShape

log = logging.getLogger(__name__)

GRID_Q = 400
GRID_P = 400


class BounceError(RuntimeError):
    """The next boundary intersection could not be located."""


class SeedNotChaoticError(ValueError):
    pass


@dataclass(frozen=True)
class SosState:
    s: float
    p: float

    def __post_init__(self):
        if abs(self.p) > 1.0:
            raise ValueError(f"|p| must not exceed 1, got {self.p}")


@dataclass
class ChaosGrid:
    """+1/-1 chaotic-cell indicator on the quadrant, indexed ``[i_q, j_p]``."""

    gamma: np.ndarray
    lam: float
    n_collisions: int = 0
    converged: bool = True
    counts: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_chaotic(self) -> int:
        return int(np.count_nonzero(self.gamma > 0))

    @property
    def chaotic_fraction(self) -> float:
        return self.n_chaotic / self.gamma.size


@dataclass
class TransportResult:
    n: np.ndarray
    p2: np.ndarray
    saturation: float
    N_T: int
    saturated: bool
    n_ensemble: int

    @property
    def p2_curve(self):
        return list(zip(self.n.tolist(), self.p2.tolist()))


def _tables(shape: BilliardShape):
    return shape.theta_nodes[1], shape.s_nodes, shape.ds_nodes, shape.perimeter


def _raise_bounce(shape, theta, p, status):
    s = float(shape.arclength_of_theta(theta))
    kind = {1: "no intersection found", 2: "start point is the cusp"}.get(status, "unknown")
    raise BounceError(f"bounce map failed ({kind}) at lambda={shape.lam}, s={s!r}, p={p!r}, theta={theta!r}")


def bounce_step(shape: BilliardShape, state: SosState) -> tuple[SosState, float]:
    """Next collision and the chord length travelled to reach it."""
    theta = float(shape.theta_of_arclength(state.s))
    th1, p1, chord, status = _bounce.bounce(theta, float(state.p), shape.lam)
    if status:
        _raise_bounce(shape, theta, state.p, status)
    return SosState(float(shape.arclength_of_theta(th1)), float(p1)), float(chord)


def orbit(shape: BilliardShape, state: SosState, n: int):
    """Arrays ``s, p`` (length n+1) and chord lengths (length n) of an orbit."""
    theta = float(shape.theta_of_arclength(state.s))
    th, p, chords, status = _bounce.trace_orbit(theta, float(state.p), int(n), shape.lam)
    if status:
        _raise_bounce(shape, th[-1], p[-1], status)
    return shape.arclength_of_theta(th), p, chords


def cell_of(shape: BilliardShape, s, p, n_q=GRID_Q, n_p=GRID_P):
    """Quadrant cell indices after the symmetry folding s -> min(s, L-s), p -> |p|."""
    L = shape.perimeter
    s = np.mod(s, L)
    s = np.where(s > L / 2, L - s, s)
    i = np.minimum((s / (L / 2) * n_q).astype(np.int64), n_q - 1)
    j = np.minimum((np.abs(p) * n_p).astype(np.int64), n_p - 1)
    return i, j


def lyapunov(shape: BilliardShape, state: SosState, n: int = 20000, d0: float = 1e-9) -> float:
    """Largest Lyapunov exponent per collision (finite-time estimate)."""
    theta = float(shape.theta_of_arclength(state.s))
    return float(_bounce.lyapunov_estimate(theta, float(state.p), int(n), shape.lam, d0))


def default_seed(shape: BilliardShape, n_test: int = 5000) -> SosState:
    """The candidate seed with the largest finite-time Lyapunov exponent."""
    best, best_ly = None, -np.inf
    for s_frac in (0.1, 0.25, 0.4):
        for p in (0.05, 0.2, 0.35, 0.5, 0.65):
            st = SosState(s_frac * shape.perimeter, p)
            ly = lyapunov(shape, st, n_test)
            if np.isfinite(ly) and ly > best_ly:
                best, best_ly = st, ly
    return best


def _visit_chunk(lam, theta, p, n, tables, n_q, n_p, n_checkpoints):
    counts = np.zeros((n_q, n_p), dtype=np.int64)
    history = np.zeros(n_checkpoints, dtype=np.int64)
    th, pp, status = _bounce.accumulate_visits(theta, p, n, lam, *tables, counts, n_checkpoints, history)
    return counts, history, th, pp, status


def build_chaos_grid(shape: BilliardShape, n_collisions: int = 10**8, seed_state: SosState | None = None,
                     n_q: int = GRID_Q, n_p: int = GRID_P, min_lyapunov: float = 0.02,
                     min_fraction: float = 0.01, jobs: int = 1) -> ChaosGrid:
    """Mark every quadrant cell visited by one long chaotic orbit.

    A single visit suffices for a cell to count as chaotic.  The orbit is
    split into ``jobs`` segments started from successive points of the seed
    orbit; per-segment visit maps are merged.  Convergence is judged on the
    last 10% of collisions (fewer than 0.1% new cells).
    """
    if seed_state is None:
        seed_state = default_seed(shape)
    ly = lyapunov(shape, seed_state)
    theta = float(shape.theta_of_arclength(seed_state.s))
    tables = _tables(shape)
    n_checkpoints = 100
    # segment starts: points 1000 collisions apart on the seed orbit
    starts = []
    th, p = theta, float(seed_state.p)
    for a, b in split(n_collisions, jobs):
        starts.append((th, p, b - a))
        th, p, _, status = _bounce.run_orbit(th, p, 1000, shape.lam)
        if status:
            _raise_bounce(shape, th, p, status)
    parts = run_chunks(_visit_chunk, [(shape.lam, t0, p0, n, tables, n_q, n_p, n_checkpoints)
                                      for t0, p0, n in starts], jobs)
    counts = np.zeros((n_q, n_p), dtype=np.int64)
    for c, _, th, pp, status in parts:
        if status:
            _raise_bounce(shape, th, pp, status)
        counts += c
    gamma = np.where(counts > 0, 1, -1).astype(np.int8)
    n_c = int(np.count_nonzero(counts))
    if ly < min_lyapunov or n_c < min_fraction * counts.size:
        raise SeedNotChaoticError(
            f"seed not chaotic: Lyapunov estimate {ly:.3g}, footprint {n_c} cells of {counts.size}")
    # convergence from the first segment's growth history (the only one when jobs == 1)
    hist = parts[0][1]
    late = hist[int(0.9 * n_checkpoints) - 1]
    converged = (hist[-1] - late) < 1e-3 * max(hist[-1], 1)
    if not converged:
        log.warning("chaos grid not converged for lambda=%g: %d -> %d cells over the last 10%%",
                    shape.lam, late, hist[-1])
    return ChaosGrid(gamma=gamma, lam=shape.lam, n_collisions=int(n_collisions),
                     converged=bool(converged), counts=counts)


def _classify_chunk(lam, thetas, ps, n_steps, tables, gamma):
    return _bounce.classify_samples(thetas, ps, n_steps, lam, *tables, gamma)


@dataclass
class RhoEstimate:
    rho_r: float
    rho_c: float
    stderr: float
    n_samples: int
    sos_chaotic_fraction: float


def estimate_rho_r(shape: BilliardShape, grid: ChaosGrid, n_samples: int = 4000, n_steps: int = 10**4,
                   threshold: float = 0.5, seed: int = 0, jobs: int = 1) -> RhoEstimate:
    """Regular phase-space volume fraction by free-path-weighted Monte Carlo.

    Samples are uniform in ``(s, p)`` on the whole section.  A sample is
    chaotic when more than ``threshold`` of the cells its orbit visits in
    ``n_steps`` collisions are chaotic cells.  Each sample is weighted by the
    mean chord length of its orbit, converting section area into flow volume.
    """
    if n_samples < 1000:
        raise ValueError("estimate_rho_r needs at least 1000 samples")
    rng = np.random.default_rng(seed)
    s = rng.uniform(0.0, shape.perimeter, n_samples)
    p = rng.uniform(-1.0, 1.0, n_samples)
    thetas = shape.theta_of_arclength(s)
    tables = _tables(shape)
    gamma = np.ascontiguousarray(grid.gamma)
    parts = run_chunks(_classify_chunk, [(shape.lam, thetas[a:b].copy(), p[a:b].copy(), n_steps, tables, gamma)
                                         for a, b in split(n_samples, jobs)], jobs)
    frac = np.concatenate([x[0] for x in parts])
    mfp = np.concatenate([x[1] for x in parts])
    if any(x[2] for x in parts):
        raise BounceError(f"bounce map failed during rho_r sampling at lambda={shape.lam}")
    chaotic = (frac > threshold).astype(float)
    w = mfp
    rho_c = float(np.sum(w * chaotic) / np.sum(w))
    # delta-method standard error of a ratio estimator
    resid = w * (chaotic - rho_c)
    stderr = float(np.sqrt(np.sum(resid**2)) / np.sum(w))
    return RhoEstimate(rho_r=1.0 - rho_c, rho_c=rho_c, stderr=stderr, n_samples=n_samples,
                       sos_chaotic_fraction=float(chaotic.mean()))


def _transport_chunk(lam, thetas, ps, checkpoints):
    return _bounce.p2_moments(thetas, ps, checkpoints, lam)


def transport_initial_conditions(shape: BilliardShape, grid: ChaosGrid, n: int, rng) -> np.ndarray:
    """``theta`` values with ``s`` uniform on [0, L/2], ``p = 0``, inside chaotic cells."""
    n_q = grid.gamma.shape[0]
    out = []
    got = 0
    while got < n:
        s = rng.uniform(0.0, shape.perimeter / 2, 2 * n)
        i = np.minimum((s / (shape.perimeter / 2) * n_q).astype(int), n_q - 1)
        keep = s[grid.gamma[i, 0] > 0]
        out.append(keep)
        got += keep.size
        if got == 0 and len(out) > 20:
            raise ValueError("no chaotic cells on the line p = 0")
    s = np.concatenate(out)[:n]
    return shape.theta_of_arclength(s)


def transport_time(shape: BilliardShape, grid: ChaosGrid, n_ensemble: int = 10**5,
                   max_collisions: int = 10**6, n_points: int = 61, threshold: float = 0.9,
                   slope_tol: float = 0.02, seed: int = 0, jobs: int = 1) -> TransportResult:
    """Spreading of <p^2> from the line p = 0 and the collision count N_T at which it saturates.

    The saturation value is the mean of <p^2> over the last decade of
    collision counts.  When <p^2> still rises across that decade by more than
    ``slope_tol`` (relative, per decade) the result is marked unsaturated and
    ``N_T`` is a lower bound.
    """
    if n_ensemble < 10**4:
        raise ValueError("transport_time needs an ensemble of at least 10^4")
    rng = np.random.default_rng(seed)
    thetas = transport_initial_conditions(shape, grid, n_ensemble, rng)
    ps = np.zeros_like(thetas)
    checkpoints = np.unique(np.round(np.logspace(0, np.log10(max_collisions), n_points)).astype(np.int64))
    parts = run_chunks(_transport_chunk, [(shape.lam, thetas[a:b].copy(), ps[a:b].copy(), checkpoints)
                                          for a, b in split(n_ensemble, jobs)], jobs)
    if any(x[1] for x in parts):
        raise BounceError(f"bounce map failed during transport run at lambda={shape.lam}")
    p2 = sum(x[0] for x in parts) / n_ensemble
    return _read_transport(checkpoints, p2, threshold, slope_tol, n_ensemble)


def _read_transport(n, p2, threshold, slope_tol, n_ensemble):
    last = n >= n[-1] / 10.0
    saturation = float(p2[last].mean())
    slope = np.polyfit(np.log10(n[last]), p2[last], 1)[0] if last.sum() > 1 else 0.0
    saturated = bool(slope <= slope_tol * saturation)
    level = threshold * (saturation if saturated else float(p2[-1]))
    N_T = int(n[np.argmax(p2 >= level)])
    return TransportResult(n=n, p2=p2, saturation=saturation, N_T=max(N_T, 1),
                           saturated=saturated, n_ensemble=n_ensemble)


def alpha_parameter(k: float, N_T: float) -> tuple[float, bool]:
    """Ratio of Heisenberg to transport time, 2k/N_T, and whether localization is expected (k <= N_T/2)."""
    if k <= 0 or N_T < 1:
        raise ValueError("need k > 0 and N_T >= 1")
    return 2.0 * k / N_T, bool(k <= N_T / 2.0)


def santalo_mean_free_path(shape: BilliardShape) -> float:
    return np.pi * shape.area / shape.perimeter
