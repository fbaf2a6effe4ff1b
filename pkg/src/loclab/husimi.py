"""Poincare Husimi functions of boundary functions on the 400 x 400 quadrant grid.

The coherent state on the boundary is the periodized Gaussian packet

    c_{(q,p),k}(s) = sum_m exp(i k p (s - q + mL)) exp(-k (s - q + mL)^2 / 2)

and ``H(q, p) = |integral conj(c) u ds|^2``.  The overall prefactor is left at
one because every grid is rescaled to unit sum afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

N_Q = N_P = 400
# the Gaussian factor exp(-k d^2 / 2) drops below this beyond the cutoff
GAUSS_TAIL = 1e-16
SAMPLES_PER_WAVELENGTH = 20


class NullBoundaryFunction(ValueError):
    pass


def grid_axes(perimeter):
    """Cell centres ``q`` (on [0, L/2]) and ``p`` (on [0, 1]) of the quadrant grid."""
    dq = perimeter / (2 * N_Q)
    dp = 1.0 / N_P
    return dq / 2 + dq * np.arange(N_Q), dp / 2 + dp * np.arange(N_P)


def _cutoff(k):
    return np.sqrt(-2.0 * np.log(GAUSS_TAIL) / k)


def _check_sampling(state):
    ds = state.ds
    limit = 2 * np.pi / state.k / SAMPLES_PER_WAVELENGTH
    if ds > limit * (1 + 1e-9):
        raise ValueError(f"boundary function undersampled: ds = {ds:.3e} > lambda_B/20 = {limit:.3e}")


def coherent_state(s, q, p, k, perimeter):
    """Periodized coherent state at boundary points ``s`` (terms below the tail dropped)."""
    s = np.asarray(s, dtype=float)
    cut = _cutoff(k)
    m_lo = int(np.floor((-cut - s.max() + q) / perimeter))
    m_hi = int(np.ceil((cut - s.min() + q) / perimeter))
    out = np.zeros(s.shape, dtype=complex)
    for m in range(m_lo, m_hi + 1):
        d = s - q + m * perimeter
        g = np.exp(-0.5 * k * d * d)
        out += np.where(g >= GAUSS_TAIL, np.exp(1j * k * p * d) * g, 0.0)
    return out


def coherent_overlap(state, q, p):
    """Trapezoid-rule projection of the boundary function on the coherent state at (q, p)."""
    if not -1.0 <= p <= 1.0:
        raise ValueError("p must lie in [-1, 1]")
    _check_sampling(state)
    perimeter = state.s.size * state.ds
    c = coherent_state(state.s, q, p, state.k, perimeter)
    return complex(np.sum(np.conj(c) * state.u) * state.ds)


def _amplitudes(u, ds, k, q, p):
    """|overlap|^2 on the product grid q x p for equispaced samples ``u`` starting at s = 0.

    For every q the samples inside the Gaussian window are the same run of
    offsets shifted by an integer, so the phase table is shared and the whole
    grid is one matrix product.
    """
    n = u.size
    half = int(np.ceil(_cutoff(k) / ds)) + 1
    offs = np.arange(-half, half + 1)
    j0 = np.rint(q / ds).astype(int)
    J = j0[:, None] + offs[None, :]
    D = J * ds - q[:, None]
    G = np.exp(-0.5 * k * D * D)
    G = np.where(G >= GAUSS_TAIL, G, 0.0) * u[J % n]
    # exp(-i k p (j ds - q)) = exp(-i k p w ds) * exp(-i k p (j0 ds - q)); the second
    # factor has unit modulus for each (q, p) and drops out of |.|^2
    phase = np.exp(-1j * k * np.multiply.outer(offs * ds, p))
    amp = G @ phase
    return np.abs(amp) ** 2 * ds * ds


@dataclass(frozen=True)
class HusimiGrid:
    """Normalized Husimi function on the quadrant; ``values[i, j]`` is cell (q_i, p_j)."""

    values: np.ndarray = field(repr=False)
    k: float
    sum_check: float

    def __post_init__(self):
        if self.values.shape != (N_Q, N_P):
            raise ValueError(f"Husimi grid must be {N_Q}x{N_P}, got {self.values.shape}")
        self.values.setflags(write=False)


def husimi_raw(state):
    """Unnormalized H folded onto the quadrant by averaging its symmetry images.

    The images of (q, p) are (L-q, -p) from the reflection, (q, -p) from time
    reversal, and their composition (L-q, p).
    """
    _check_sampling(state)
    u = np.asarray(state.u)
    n = u.size
    perimeter = n * state.ds
    dq = perimeter / (2 * N_Q)
    q_full = dq / 2 + dq * np.arange(2 * N_Q)       # [0, L), q_{2N-1-i} = L - q_i
    _, p = grid_axes(perimeter)
    pos = _amplitudes(u, state.ds, state.k, q_full, p)
    neg = pos if np.isrealobj(u) else _amplitudes(u, state.ds, state.k, q_full, -p)
    return 0.25 * (pos[:N_Q] + pos[::-1][:N_Q] + neg[:N_Q] + neg[::-1][:N_Q])


def husimi_grid(state) -> HusimiGrid:
    H = husimi_raw(state)
    total = H.sum()
    if not total > 0.0:
        raise NullBoundaryFunction("null boundary function")
    H = H / total
    return HusimiGrid(values=H, k=float(state.k), sum_check=float(H.sum()))


def husimi_grids(states, jobs=1):
    from ._parallel import run_chunks

    return run_chunks(husimi_grid, [(st,) for st in states], jobs)
