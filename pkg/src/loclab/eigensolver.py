"""Dirichlet eigenvalues of the lambda billiard by plane-wave decomposition.

The billiard is desymmetrized with respect to the x axis.  A state of odd
parity vanishes on the symmetry line, a state of even parity has zero normal
derivative there.  Both conditions are built into the basis

    odd:  cos(k x cos a) sin(k y sin a),  sin(k x cos a) sin(k y sin a)
    even: cos(k x cos a) cos(k y sin a),  sin(k x cos a) cos(k y sin a)

with directions ``a`` in (0, pi/2), so only the curved upper boundary has to
be collocated.  The tension at wavenumber ``k`` is the smallest generalized
singular value of the boundary matrix against an interior-norm matrix.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh, svd

from ._parallel import run_chunks, split
from .geometry import BilliardShape, speed

log = logging.getLogger(__name__)

PARITIES = ("odd", "even")
# smallest relative singular value of the interior metric the Gram route can resolve
GRAM_RCOND = 3e-7


class IllConditionedBasis(RuntimeError):
    pass


# -- Weyl law ------------------------------------------------------------


def half_domain(shape: BilliardShape, parity: str) -> tuple[float, float]:
    """Area and effective Dirichlet perimeter of the desymmetrized billiard.

    The symmetry segment (length 2) counts with + sign for a Dirichlet (odd)
    and - sign for a Neumann (even) condition.
    """
    if parity not in PARITIES:
        raise ValueError(f"parity must be 'odd' or 'even', got {parity!r}")
    seg = 2.0
    L = 0.5 * shape.perimeter + (seg if parity == "odd" else -seg)
    return 0.5 * shape.area, L


def weyl_count(shape: BilliardShape, k, parity: str | None = None):
    """Two-term Weyl estimate A k^2/(4 pi) - L k/(4 pi) of the number of levels below k.

    ``parity=None`` counts the full billiard; ``'odd'``/``'even'`` count one
    symmetry class.
    """
    k = np.asarray(k, dtype=float)
    if np.any(k < 0):
        raise ValueError("k must be nonnegative")
    if parity is None:
        A, L = shape.area, shape.perimeter
    else:
        A, L = half_domain(shape, parity)
    return A * k * k / (4 * np.pi) - L * k / (4 * np.pi)


def weyl_leading(shape: BilliardShape, k):
    """Leading Thomas-Fermi term A k^2/(4 pi)."""
    k = np.asarray(k, dtype=float)
    return shape.area * k * k / (4 * np.pi)


def mean_spacing(shape: BilliardShape, k, parity="odd"):
    A, L = half_domain(shape, parity)
    return 1.0 / (A * k / (2 * np.pi) - L / (4 * np.pi))


# -- basis and tension ---------------------------------------------------


def default_basis_size(shape: BilliardShape, k: float) -> int:
    """Symmetrized basis functions: three per boundary wavelength, i.e. ceil(3 L k / (2 pi))."""
    n = int(np.ceil(3.0 * shape.perimeter * k / (2 * np.pi)))
    return max(n + n % 2, 8)


@dataclass(frozen=True)
class Discretization:
    """Collocation and interior points for one shape, parity and basis size."""

    shape: BilliardShape
    parity: str
    basis_size: int
    bx: np.ndarray = field(repr=False)
    by: np.ndarray = field(repr=False)
    bw: np.ndarray = field(repr=False)
    ix: np.ndarray = field(repr=False)
    iy: np.ndarray = field(repr=False)
    iw: np.ndarray = field(repr=False)
    angles: np.ndarray = field(repr=False)
    metric: str = "gram"

    @classmethod
    def build(cls, shape: BilliardShape, parity: str, basis_size: int, metric: str = "gram"):
        if metric not in ("gram", "svd"):
            raise ValueError(f"metric must be 'gram' or 'svd', got {metric!r}")
        if parity not in PARITIES:
            raise ValueError(f"parity must be 'odd' or 'even', got {parity!r}")
        n_dir = basis_size // 2
        angles = (np.arange(n_dir) + 0.5) * (0.5 * np.pi / n_dir)
        # collocation: midpoints in arclength on the upper curved boundary
        m = 2 * basis_size
        half = 0.5 * shape.perimeter
        s = (np.arange(m) + 0.5) * (half / m)
        theta = shape.theta_of_arclength(s)
        bx, by = shape.boundary_point(theta)
        bw = np.full(m, np.sqrt(half / m))
        # interior: conformal image of a polar grid on the upper half disk
        n_int = 2 * basis_size
        n_r = max(4, int(np.sqrt(n_int / np.pi)))
        n_a = max(4, int(np.ceil(n_int / n_r)))
        r, wr = np.polynomial.legendre.leggauss(n_r)
        r = 0.5 * (r + 1.0)
        wr = 0.5 * wr
        phi = (np.arange(n_a) + 0.5) * (np.pi / n_a)
        R, PHI = np.meshgrid(r, phi, indexing="ij")
        z = R * np.exp(1j * PHI)
        w = z + shape.lam * z * z
        jac = np.abs(1.0 + 2.0 * shape.lam * z) ** 2
        iw = np.sqrt((wr[:, None] * R * jac * (np.pi / n_a)).ravel())
        return cls(shape, parity, basis_size, bx, by, bw, w.real.ravel(), w.imag.ravel(), iw, angles, metric)

    def basis(self, k, x, y):
        """Basis functions at points, shape (n_points, basis_size)."""
        ca, sa = np.cos(self.angles), np.sin(self.angles)
        X = k * np.multiply.outer(x, ca)
        Y = k * np.multiply.outer(y, sa)
        ypart = np.sin(Y) if self.parity == "odd" else np.cos(Y)
        return np.concatenate((np.cos(X) * ypart, np.sin(X) * ypart), axis=1)

    def basis_gradient(self, k, x, y):
        ca, sa = np.cos(self.angles), np.sin(self.angles)
        X = k * np.multiply.outer(x, ca)
        Y = k * np.multiply.outer(y, sa)
        cX, sX = np.cos(X), np.sin(X)
        if self.parity == "odd":
            yp, dyp = np.sin(Y), np.cos(Y)
        else:
            yp, dyp = np.cos(Y), -np.sin(Y)
        gx = np.concatenate((-sX * yp * ca, cX * yp * ca), axis=1) * k
        gy = np.concatenate((cX * dyp * sa, sX * dyp * sa), axis=1) * k
        return gx, gy

    def reduced_boundary_matrix(self, k, rcond=1e-12, max_cond=1e14):
        """Boundary matrix expressed in the regularized interior-orthonormal coordinates.

        Returns ``(T, V)``; singular values of ``T`` are the generalized singular
        values and ``V`` maps right singular vectors back to basis coefficients.

        With ``metric="gram"`` the interior metric is diagonalized through its
        Gram matrix, which is about four times cheaper than an SVD but cannot
        resolve singular values below roughly 3e-7 of the largest; those
        directions are dropped.  ``metric="svd"`` applies ``rcond`` exactly.
        """
        B = self.basis(k, self.ix, self.iy) * self.iw[:, None]
        if self.metric == "gram":
            ev, U = eigh(B.T @ B, check_finite=False)
            sb = np.sqrt(np.clip(ev[::-1], 0.0, None))
            vt = U[:, ::-1].T
            keep = sb > max(rcond, GRAM_RCOND) * sb[0]
        else:
            _, sb, vt = svd(B, full_matrices=False, check_finite=False, lapack_driver="gesdd")
            keep = sb > rcond * sb[0]
        if not np.any(keep) or sb[0] / sb[keep][-1] > max_cond:
            raise IllConditionedBasis(
                f"interior metric ill-conditioned at k={k}; use a smaller basis")
        V = vt[keep].T / sb[keep]
        A = self.basis(k, self.bx, self.by) * self.bw[:, None]
        return A @ V, V

    def tension_values(self, k, n_values=2):
        T, _ = self.reduced_boundary_matrix(k)
        sv = svd(T, compute_uv=False, check_finite=False, lapack_driver="gesdd")
        out = np.full(n_values, np.inf)
        tail = np.sort(sv)[:n_values]
        out[:tail.size] = tail
        return out

    def solve(self, k):
        """Smallest tension and its coefficient vector at ``k``."""
        T, V = self.reduced_boundary_matrix(k)
        _, sv, wt = svd(T, full_matrices=False, check_finite=False, lapack_driver="gesdd")
        return sv[-1], V @ wt[-1]


def tension(shape: BilliardShape, parity: str, k: float, basis_size: int | None = None) -> float:
    """Boundary residual of the best unit-interior-norm superposition at wavenumber k."""
    if k <= 0:
        raise ValueError("k must be positive")
    if basis_size is None:
        basis_size = default_basis_size(shape, k)
    minimum = int(np.ceil(1.5 * shape.perimeter * k / np.pi))
    if basis_size < minimum:
        raise ValueError(f"basis_size {basis_size} below ceil(1.5 L k / pi) = {minimum}")
    return float(Discretization.build(shape, parity, basis_size).tension_values(k, 1)[0])


# -- eigenstates ---------------------------------------------------------


@dataclass
class EigenState:
    """One eigenwavenumber with its boundary function u(s) = n . grad psi.

    ``u`` is sampled at ``s = j L / n`` over the whole boundary and normalized
    so that the interior norm from the boundary identity
    (1/2k^2) * integral of (r . n) u^2 ds equals one.
    """

    k: float
    parity: str
    s: np.ndarray = field(repr=False)
    u: np.ndarray = field(repr=False)
    tension: float = np.nan
    norm_check: float = np.nan

    @property
    def ds(self):
        return self.s[1] - self.s[0]

    @property
    def u_samples(self):
        return list(zip(self.s.tolist(), self.u.tolist()))


def boundary_samples(k: float, perimeter: float, points_per_wavelength: int = 20) -> int:
    """Number of equispaced samples with spacing at most (2 pi / k) / points_per_wavelength."""
    return int(np.ceil(points_per_wavelength * perimeter * k / (2 * np.pi)))


def boundary_identity_norm(shape, s, u, k):
    theta = shape.theta_of_arclength(s)
    x, y = shape.boundary_point(theta)
    _, (nx, ny) = shape.tangent_normal(theta)
    ds = shape.perimeter / s.size
    return float(np.sum((x * nx + y * ny) * u * u) * ds / (2 * k * k))


def make_state(disc: Discretization, k: float, coeffs, tension_value=np.nan, n_samples=None,
               check_norm=False) -> EigenState:
    shape = disc.shape
    n = n_samples or boundary_samples(k, shape.perimeter)
    s, theta, x, y, nx, ny = shape.sample_boundary(n)
    gx, gy = disc.basis_gradient(k, x, y)
    u = (gx * nx[:, None] + gy * ny[:, None]) @ coeffs
    norm = boundary_identity_norm(shape, s, u, k)
    scale = 1.0 / np.sqrt(norm)
    u = u * scale
    state = EigenState(k=float(k), parity=disc.parity, s=s, u=u, tension=float(tension_value))
    if check_norm:
        state.norm_check = abs(interior_norm(disc, k, coeffs * scale) - 1.0)
    return state


def interior_norm(disc: Discretization, k: float, coeffs, n_r=None, n_a=None) -> float:
    """Integral of psi^2 over the whole billiard by direct quadrature on a conformal polar grid."""
    shape = disc.shape
    n_r = n_r or int(0.8 * k) + 24
    n_a = n_a or int(1.6 * k) + 32  # points on the upper half; psi^2 is even in y
    r, wr = np.polynomial.legendre.leggauss(n_r)
    r = 0.5 * (r + 1.0)
    wr = 0.5 * wr
    phi = (np.arange(n_a) + 0.5) * (np.pi / n_a)
    total = 0.0
    for a, b in split(n_r, max(1, n_r * n_a * disc.basis_size // 4_000_000)):
        R, PHI = np.meshgrid(r[a:b], phi, indexing="ij")
        z = R * np.exp(1j * PHI)
        w = z + shape.lam * z * z
        jac = np.abs(1.0 + 2.0 * shape.lam * z) ** 2
        psi = disc.basis(k, w.real.ravel(), w.imag.ravel()) @ coeffs
        total += np.sum(psi**2 * (wr[a:b, None] * R * jac).ravel()) * (np.pi / n_a)
    return 2.0 * total


# -- spectrum scan -------------------------------------------------------


@dataclass
class SpectrumWindow:
    lam: float
    parity: str
    k_lo: float
    k_hi: float
    levels: np.ndarray
    states: list = field(default_factory=list, repr=False)
    tensions: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)
    weyl_expected: float = 0.0
    flags: list = field(default_factory=list)

    @property
    def count(self) -> int:
        return int(self.levels.size)

    @property
    def weyl_deviation(self) -> float:
        return self.count - self.weyl_expected

    @property
    def complete(self) -> bool:
        return not any(f.startswith("incomplete") for f in self.flags)

    @property
    def completeness_report(self) -> dict:
        return {"count": self.count, "weyl": self.weyl_expected,
                "deviation": self.weyl_deviation, "flags": list(self.flags)}


def _scan_chunk(shape, parity, basis_size, ks):
    disc = Discretization.build(shape, parity, basis_size)
    return np.array([disc.tension_values(k, 2) for k in ks])


def _parabola_vertex(x, y):
    (x0, x1, x2), (y0, y1, y2) = x, y
    d = (x1 - x0) * (y1 - y2) - (x1 - x2) * (y1 - y0)
    if d == 0:
        return x1
    n = (x1 - x0) ** 2 * (y1 - y2) - (x1 - x2) ** 2 * (y1 - y0)
    return x1 - 0.5 * n / d


def _refine(disc, k_left, k_mid, k_right, f_mid, tol, max_iter=40):
    """Locate a V-shaped tension minimum inside a bracket.

    Works on tension squared, which is locally a parabola around an isolated
    level.  Iteration stops once evaluated points enclose the best one within
    about two tolerances; a vertex that lands on the best point is confirmed
    by probing one tolerance to either side.
    """
    f = lambda k: disc.tension_values(k, 2)
    vals = {k_mid: f_mid, k_left: f(k_left), k_right: f(k_right)}
    for _ in range(max_iter):
        best = min(vals, key=lambda kk: vals[kk][0])
        left = max([kk for kk in vals if kk < best], default=None)
        right = min([kk for kk in vals if kk > best], default=None)
        if left is None or right is None or right - left <= 2.5 * tol:
            break
        xs = (left, best, right)
        cand = _parabola_vertex(xs, [vals[kk][0] ** 2 for kk in xs])
        if abs(cand - best) < tol and left < cand < right:
            for kk in (best - tol, best + tol):
                if left < kk < right:
                    vals[kk] = f(kk)
            continue
        if not (left < cand < right) or cand in vals:
            # golden step into the larger side of the bracket
            cand = best + 0.382 * ((right - best) if right - best > best - left else (left - best))
        vals[cand] = f(cand)
    best = min(vals, key=lambda kk: vals[kk][0])
    return best, vals[best]


def eigenvalues_in_range(shape: BilliardShape, parity: str, k_lo: float, k_hi: float,
                         step_fraction: float = 0.125, basis_factor: float = 1.0,
                         segment_width: float | None = None, accept_ratio: float = 0.05,
                         with_states: bool = True, check_norm: bool = False,
                         jobs: int = 1, min_spacings: float = 10.0) -> SpectrumWindow:
    """All levels of one parity class in [k_lo, k_hi].

    The tension is scanned with a step of ``step_fraction`` mean spacings,
    every local minimum is refined to 1e-6 mean spacings, and minima whose
    tension stays above ``accept_ratio`` times the local tension slope per
    mean spacing are discarded as spurious.  A small second singular value at
    a minimum signals an unresolved near-degenerate pair, which is then split
    on a finer scan or recorded twice.
    """
    if parity not in PARITIES:
        raise ValueError(f"parity must be 'odd' or 'even', got {parity!r}")
    if k_hi <= k_lo:
        return SpectrumWindow(shape.lam, parity, k_lo, k_hi, np.empty(0))
    expected = float(weyl_count(shape, k_hi, parity) - weyl_count(shape, k_lo, parity))
    if expected < min_spacings:
        raise ValueError(f"window [{k_lo}, {k_hi}] holds only ~{expected:.1f} levels; need {min_spacings}")
    if segment_width is None:
        segment_width = max(2.0, 0.1 * k_hi)
    n_seg = max(1, int(np.ceil((k_hi - k_lo) / segment_width)))
    edges = np.linspace(k_lo, k_hi, n_seg + 1)
    levels, states, tens, flags = [], [], [], []
    for a, b in zip(edges[:-1], edges[1:]):
        sp = float(mean_spacing(shape, b, parity))
        step = step_fraction * sp
        basis_size = int(np.ceil(basis_factor * default_basis_size(shape, b + 2 * step)))
        basis_size += basis_size % 2
        disc = Discretization.build(shape, parity, basis_size)
        ks = np.arange(a - 2 * step, b + 2 * step + 0.5 * step, step)
        parts = run_chunks(_scan_chunk, [(shape, parity, basis_size, ks[i:j]) for i, j in split(ks.size, jobs)], jobs)
        sig = np.concatenate(parts)
        found = _levels_from_scan(disc, ks, sig, sp, accept_ratio, flags)
        for k_n, t in found:
            if a <= k_n < b or (b == k_hi and k_n == b):
                levels.append(k_n)
                tens.append(t)
                if with_states:
                    t_min, c = disc.solve(k_n)
                    states.append(make_state(disc, k_n, c, t_min, check_norm=check_norm))
    order = np.argsort(levels)
    levels = np.asarray(levels)[order]
    states = [states[i] for i in order] if with_states else []
    win = SpectrumWindow(shape.lam, parity, k_lo, k_hi, levels, states, np.asarray(tens)[order],
                         weyl_expected=expected, flags=flags)
    _check_completeness(shape, win)
    return win


def _levels_from_scan(disc, ks, sig, spacing, accept_ratio, flags):
    s1, s2 = sig[:, 0], sig[:, 1]
    tol = 1e-6 * spacing   # refinement target
    sep = 2e-5 * spacing   # two minima closer than this are one level
    step = ks[1] - ks[0]
    out = []
    idx = np.where((s1[1:-1] < s1[:-2]) & (s1[1:-1] <= s1[2:]))[0] + 1
    # typical slope of the tension per unit k in this segment
    slope = np.median(np.abs(np.diff(s1))) / step
    # a dip of the second singular value next to a first-value minimum means a
    # second level whose tension may be much steeper than the median slope
    dip2 = np.where((s2[1:-1] < s2[:-2]) & (s2[1:-1] <= s2[2:]))[0] + 1
    for i in idx:
        k_n, (t1, t2) = _refine(disc, ks[i - 1], ks[i], ks[i + 1], sig[i], tol)
        if t1 > accept_ratio * slope * spacing:
            continue
        if t2 < 2.0 * slope * step or np.any((np.abs(dip2 - i) <= 1) & (s2[dip2] < 2.0 * slope * step)):
            pair = _split_pair(disc, k_n, t2, slope, step, tol, sep)
            if pair is None and t2 < slope * sep:
                # two levels closer than the resolution: keep both, say so
                flags.append(f"degenerate:{k_n:.10f}")
                out.extend([(k_n, t1), (k_n, t1)])
            elif pair is None:
                out.append((k_n, t1))
            else:
                out.extend(m for m in pair if m[1] <= accept_ratio * slope * spacing)
            continue
        out.append((k_n, t1))
    # merge duplicates found from neighbouring scan minima
    out.sort()
    merged = []
    for k_n, t in out:
        if merged and abs(k_n - merged[-1][0]) < spacing and not any(
                f.startswith("degenerate") and abs(float(f.split(":")[1]) - k_n) < sep for f in flags) \
                and not _distinct(disc, k_n, t, *merged[-1], sep):
            if t < merged[-1][1]:
                merged[-1] = (k_n, t)
            continue
        merged.append((k_n, t))
    return merged


def _distinct(disc, a, ta, b, tb, sep):
    """True when the tension rises between two minima, i.e. they are two levels."""
    if abs(a - b) < sep:
        return False
    mid = disc.tension_values(0.5 * (a + b), 1)[0]
    return mid > 4.0 * max(ta, tb)


def _split_pair(disc, k_n, t2, slope, step, tol, sep):
    """Resolve a cluster of two or more levels hiding inside one scan minimum.

    Two fine scans are made: one sized by the second singular value (tight
    pairs) and one a scan step wide (clusters of three or more).
    """
    found = []
    for width in {min(max(2.0 * t2 / slope, 4 * sep), step), step}:
        fine = np.linspace(k_n - 2 * width, k_n + 2 * width, 33)
        sig = np.array([disc.tension_values(k, 2) for k in fine])
        s1 = sig[:, 0]
        idx = np.where((s1[1:-1] < s1[:-2]) & (s1[1:-1] <= s1[2:]))[0] + 1
        for i in idx:
            k, (t1, _) = _refine(disc, fine[i - 1], fine[i], fine[i + 1], sig[i], tol)
            if all(_distinct(disc, k, t1, kk, tt, sep) for kk, tt in found):
                found.append((k, t1))
    found.sort()
    return found if len(found) >= 2 else None


def _check_completeness(shape, win: SpectrumWindow):
    if win.count == 0:
        return
    deficit = -win.weyl_deviation
    if deficit > 0.005 * win.weyl_expected:
        # locate gaps: cumulative count against the smooth count
        smooth = weyl_count(shape, win.levels, win.parity) - weyl_count(shape, win.k_lo, win.parity)
        stair = np.arange(1, win.count + 1)
        jumps = np.where(np.abs(np.diff(stair - smooth)) > 1.5)[0]
        where = ",".join(f"{win.levels[j]:.6f}" for j in jumps[:10])
        gaps = f"gaps near [{where}]" if where else "no single gap stands out"
        win.flags.append(f"incomplete: count {win.count} vs Weyl {win.weyl_expected:.1f}; {gaps}")
        log.warning("spectrum window %s", win.flags[-1])
