"""Localization measures on normalized Husimi grids.

``A = exp(<I>) / N_c`` uses the information entropy ``I = -sum H log H``;
``C`` averages the normalized overlaps
``C_nm = sum H^n H^m / (Q_n Q_m)`` with ``Q_n = sqrt(sum (H^n)^2)``.
The overlap index ``M = sum H gamma`` sorts states into chaotic and regular.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

LABELS = ("chaotic", "regular")
MIN_ENTROPY_STATES = 100


def _values(H):
    return np.asarray(getattr(H, "values", H), dtype=float)


def _n_chaotic(grid):
    n = int(np.count_nonzero(np.asarray(getattr(grid, "gamma", grid)) > 0))
    if n == 0:
        raise ValueError("chaos grid has no chaotic cells")
    return n


@dataclass(frozen=True)
class StateClassification:
    M: float
    label: str
    threshold_used: float

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"label must be one of {LABELS}")
        if (self.label == "chaotic") != (self.M > self.threshold_used):
            raise ValueError("label inconsistent with M and threshold")


def overlap_index(H, grid, threshold=0.0) -> StateClassification:
    h = _values(H)
    gamma = np.asarray(getattr(grid, "gamma", grid))
    if h.shape != gamma.shape:
        raise ValueError(f"grid shape mismatch: Husimi {h.shape} vs chaos grid {gamma.shape}")
    M = float(np.clip(np.sum(h * gamma), -1.0, 1.0))
    return StateClassification(M=M, label="chaotic" if M > threshold else "regular",
                               threshold_used=float(threshold))


def entropy(H):
    """Information entropy of one grid, with 0 log 0 taken as 0."""
    h = _values(H).ravel()
    h = h[h > 0]
    return float(-np.sum(h * np.log(h)))


def entropy_measure(H_set, grid):
    """Mean entropy and the measure ``A = exp(<I>) / N_c`` over a set of grids."""
    H_set = list(H_set)
    if not H_set:
        raise ValueError("entropy_measure needs at least one state")
    if len(H_set) < MIN_ENTROPY_STATES:
        log.info("entropy measure over %d states (fewer than %d)", len(H_set), MIN_ENTROPY_STATES)
    mean_I = float(np.mean([entropy(H) for H in H_set]))
    return mean_I, float(np.exp(mean_I) / _n_chaotic(grid))


def correlation_matrix(H_set):
    """All ``C_nm`` of a set at once; the diagonal is exactly one."""
    X = np.stack([_values(H).ravel() for H in H_set])
    G = X @ X.T
    # norms from the same product, so identical grids give exactly one
    Q = np.sqrt(np.diag(G))
    if np.any(Q == 0):
        raise ValueError("a Husimi grid has zero norm (Q_n = 0)")
    C = G / np.outer(Q, Q)
    C = np.clip(C, 0.0, 1.0)
    np.fill_diagonal(C, 1.0)
    return C


def correlation_pair(Hn, Hm):
    return float(correlation_matrix([Hn, Hm])[0, 1])


def correlation_measure(H_set, window=20):
    """Mean ``C_nm`` over unordered pairs inside sliding windows of consecutive states.

    With fewer states than ``window`` the whole set forms one window.
    """
    H_set = list(H_set)
    if len(H_set) < 2:
        raise ValueError("correlation_measure needs at least two states")
    if window < 2:
        raise ValueError("window must hold at least two states")
    C = correlation_matrix(H_set)
    n = len(H_set)
    w = min(window, n)
    iu = np.triu_indices(w, 1)
    means = [C[a:a + w, a:a + w][iu].mean() for a in range(n - w + 1)]
    return float(np.mean(means))


def a_max_calibration(H_set_reference, grid):
    """``A_max = exp(max I) / N_c`` over a reference set (the almost fully chaotic billiard).

    Returns ``(A_max, low_confidence)``.
    """
    H_set_reference = list(H_set_reference)
    if not H_set_reference:
        raise ValueError("empty reference set")
    low = len(H_set_reference) < MIN_ENTROPY_STATES
    if low:
        warnings.warn(f"A_max calibrated on only {len(H_set_reference)} states", RuntimeWarning,
                      stacklevel=2)
    I_max = max(entropy(H) for H in H_set_reference)
    return float(np.exp(I_max) / _n_chaotic(grid)), low


@dataclass
class Separation:
    chaotic: list
    regular: list
    classifications: list
    chaotic_fraction: float
    ambiguous_fraction: float   # share of states with |M| < 0.5, a gauge of cut sensitivity


def separate_states(items, husimis, grid, threshold=0.0) -> Separation:
    """Order-preserving split of ``items`` (states, levels or indices) by the overlap index."""
    items = list(items)
    husimis = list(husimis)
    if len(items) != len(husimis):
        raise ValueError("need one Husimi grid per state")
    cls = [overlap_index(H, grid, threshold) for H in husimis]
    chaotic = [it for it, c in zip(items, cls) if c.label == "chaotic"]
    regular = [it for it, c in zip(items, cls) if c.label == "regular"]
    n = max(len(items), 1)
    amb = sum(abs(c.M) < 0.5 for c in cls) / n
    return Separation(chaotic, regular, cls, len(chaotic) / n, amb)


CSV_COLUMNS = ("lambda", "k_center", "n_states", "mean_I", "A", "A_rescaled", "C")


@dataclass
class LocalizationSummary:
    lam: float
    window: tuple
    mean_entropy: float
    A: float
    A_rescaled: float
    C: float
    n_states_used: int
    extra: dict = field(default_factory=dict)

    @property
    def k_center(self):
        return 0.5 * (self.window[0] + self.window[1])

    def row(self):
        return {"lambda": self.lam, "k_center": self.k_center, "n_states": self.n_states_used,
                "mean_I": self.mean_entropy, "A": self.A, "A_rescaled": self.A_rescaled, "C": self.C}


def summarize(lam, window, H_chaotic, grid, A_max=1.0, corr_window=20) -> LocalizationSummary:
    mean_I, A = entropy_measure(H_chaotic, grid)
    C = correlation_measure(H_chaotic, corr_window)
    return LocalizationSummary(lam=float(lam), window=(float(window[0]), float(window[1])),
                               mean_entropy=mean_I, A=A, A_rescaled=A / A_max, C=C,
                               n_states_used=len(H_chaotic))


def write_csv(summaries, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        w.writeheader()
        for s in summaries:
            w.writerow(s.row())
