"""Compiled kernels for the bounce map of the lambda billiard.

Internally a collision is stored as ``(theta, p)``; arclength is only needed
for binning and comes from the cubic Hermite table of :class:`BilliardShape`.
Kernels report failures through a status value instead of raising so that the
Python layer can attach the offending state to the error.
"""

import cmath
import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi
N_SCAN = 256


@njit(cache=True)
def s_of_theta(theta, h, s_nodes, ds_nodes, L):
    turns = math.floor(theta / TWO_PI)
    t = theta - turns * TWO_PI
    n = s_nodes.shape[0] - 1
    i = int(t / h)
    if i >= n:
        i = n - 1
    u = t / h - i
    u2 = u * u
    u3 = u2 * u
    s = ((2 * u3 - 3 * u2 + 1) * s_nodes[i] + (u3 - 2 * u2 + u) * ds_nodes[i] * h
         + (-2 * u3 + 3 * u2) * s_nodes[i + 1] + (u3 - u2) * ds_nodes[i + 1] * h)
    return s + turns * L


@njit(cache=True)
def _cbrt(z):
    if z == 0:
        return 0j
    return cmath.exp(cmath.log(z) / 3.0)


@njit(cache=True)
def _cubic_roots(a, b, c, d):
    """Roots of a z^3 + b z^2 + c z + d; returns ``(n, z1, z2, z3)``."""
    nan = complex(np.nan, np.nan)
    if abs(a) < 1e-9 * (abs(b) + abs(c) + abs(d)):
        # quadratic
        if abs(b) < 1e-300:
            if abs(c) < 1e-300:
                return 0, nan, nan, nan
            return 1, -d / c, nan, nan
        disc = cmath.sqrt(c * c - 4 * b * d)
        q = -0.5 * (c + disc) if (c.conjugate() * disc).real >= 0 else -0.5 * (c - disc)
        if q == 0:
            return 2, 0j, 0j, nan
        return 2, q / b, d / q, nan
    B = b / a
    C = c / a
    D = d / a
    P = C - B * B / 3.0
    Q = 2.0 * B * B * B / 27.0 - B * C / 3.0 + D
    sq = cmath.sqrt(Q * Q / 4.0 + P * P * P / 27.0)
    w1 = -Q / 2.0 + sq
    w2 = -Q / 2.0 - sq
    u = _cbrt(w1 if abs(w1) >= abs(w2) else w2)
    omega = complex(-0.5, math.sqrt(3.0) / 2.0)
    z1 = _cardano_root(u, P, Q, B, C, D)
    z2 = _cardano_root(u * omega, P, Q, B, C, D)
    z3 = _cardano_root(u * omega.conjugate(), P, Q, B, C, D)
    return 3, z1, z2, z3


@njit(cache=True)
def _cardano_root(uk, P, Q, B, C, D):
    if uk == 0:
        y = _cbrt(-Q)
    else:
        y = uk - P / (3.0 * uk)
    z = y - B / 3.0
    # two Newton steps on the normalized cubic
    for _ in range(2):
        f = ((z + B) * z + C) * z + D
        fp = (3.0 * z + 2.0 * B) * z + C
        if fp != 0:
            z = z - f / fp
    return z


@njit(cache=True)
def _trig_F(theta, lam, vx, vy, x0, y0):
    ct = math.cos(theta)
    st = math.sin(theta)
    c2 = ct * ct - st * st
    s2 = 2.0 * st * ct
    x = ct + lam * c2
    y = st + lam * s2
    dx = -st - 2.0 * lam * s2
    dy = ct + 2.0 * lam * c2
    return vx * (y - y0) - vy * (x - x0), vx * dy - vy * dx, x, y


@njit(cache=True)
def _polish(theta, lam, vx, vy, x0, y0):
    for _ in range(6):
        f, fp, x, y = _trig_F(theta, lam, vx, vy, x0, y0)
        if fp == 0.0:
            break
        step = f / fp
        theta -= step
        if abs(step) < 1e-15:
            break
    return theta


@njit(cache=True)
def _angle_gap(a, b):
    d = (a - b) % TWO_PI
    return min(d, TWO_PI - d)


@njit(cache=True)
def _scan_next(theta0, lam, vx, vy, x0, y0):
    """Fallback: sign changes of F(theta)/sin((theta-theta0)/2) on N_SCAN sectors."""
    best_t = 1e300
    best_theta = -1.0
    h = TWO_PI / N_SCAN
    prev = 0.0
    for j in range(N_SCAN + 1):
        th = theta0 + h * (j + 1e-3 if j == 0 else (j - 1e-3 if j == N_SCAN else j))
        f, fp, x, y = _trig_F(th, lam, vx, vy, x0, y0)
        g = f / math.sin(0.5 * (th - theta0))
        if j > 0 and g * prev <= 0.0:
            lo = theta0 + h * max(j - 1, 1e-3)
            hi = th
            glo = prev
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                fm, _fp, _x, _y = _trig_F(mid, lam, vx, vy, x0, y0)
                gm = fm / math.sin(0.5 * (mid - theta0))
                if gm * glo <= 0.0:
                    hi = mid
                else:
                    lo = mid
                    glo = gm
                if hi - lo < 1e-15:
                    break
            root = _polish(0.5 * (lo + hi), lam, vx, vy, x0, y0)
            f, fp, x, y = _trig_F(root, lam, vx, vy, x0, y0)
            t = vx * (x - x0) + vy * (y - y0)
            if t > 1e-12 and t < best_t:
                best_t = t
                best_theta = root % TWO_PI
        prev = g
    return best_theta, best_t


@njit(cache=True)
def bounce(theta0, p0, lam):
    """One collision of the bounce map.

    Returns ``(theta1, p1, chord, status)``; status 0 means success.
    """
    ct = math.cos(theta0)
    st = math.sin(theta0)
    c2 = ct * ct - st * st
    s2 = 2.0 * st * ct
    x0 = ct + lam * c2
    y0 = st + lam * s2
    dx = -st - 2.0 * lam * s2
    dy = ct + 2.0 * lam * c2
    nrm = math.hypot(dx, dy)
    if nrm < 1e-14:
        return theta0, p0, 0.0, 2
    tx = dx / nrm
    ty = dy / nrm
    q = math.sqrt(max(0.0, 1.0 - p0 * p0))
    # v = p t + q (i t), the inward direction is i t
    vx = p0 * tx - q * ty
    vy = p0 * ty + q * tx
    V = complex(vx, vy)
    Vc = V.conjugate()
    r0 = complex(x0, y0)
    z0 = complex(ct, st)
    ca = lam * Vc
    cb = Vc
    cc = -2j * (Vc * r0).imag
    cd = -V
    # deflate the quartic by (z - z0); the constant term -lam V drops out
    q2 = cb + z0 * ca
    q1 = cc + z0 * q2
    q0 = cd + z0 * q1
    nr, z1, z2, z3 = _cubic_roots(ca, q2, q1, q0)
    best_t = 1e300
    best_theta = -1.0
    for k in range(nr):
        z = z1 if k == 0 else (z2 if k == 1 else z3)
        if abs(abs(z) - 1.0) > 1e-3:
            continue
        th = _polish(math.atan2(z.imag, z.real), lam, vx, vy, x0, y0)
        if _angle_gap(th, theta0) < 1e-10:
            continue
        f, fp, x, y = _trig_F(th, lam, vx, vy, x0, y0)
        if abs(f) > 1e-10:
            continue
        t = vx * (x - x0) + vy * (y - y0)
        if t > 1e-12 and t < best_t:
            best_t = t
            best_theta = th % TWO_PI
    if best_theta < 0.0:
        best_theta, best_t = _scan_next(theta0, lam, vx, vy, x0, y0)
        if best_theta < 0.0:
            return theta0, p0, 0.0, 1
    th = best_theta % TWO_PI
    ct = math.cos(th)
    st = math.sin(th)
    c2 = ct * ct - st * st
    s2 = 2.0 * st * ct
    dx = -st - 2.0 * lam * s2
    dy = ct + 2.0 * lam * c2
    nrm = math.hypot(dx, dy)
    p1 = (vx * dx + vy * dy) / nrm
    if p1 > 1.0:
        p1 = 1.0
    elif p1 < -1.0:
        p1 = -1.0
    return th, p1, best_t, 0


@njit(cache=True)
def cell_index(theta, p, h, s_nodes, ds_nodes, L, n_q, n_p):
    """Quadrant cell of a collision after folding s -> L - s and p -> |p|."""
    s = s_of_theta(theta, h, s_nodes, ds_nodes, L)
    s = s % L
    if s > 0.5 * L:
        s = L - s
    i = int(s / (0.5 * L) * n_q)
    if i >= n_q:
        i = n_q - 1
    j = int(abs(p) * n_p)
    if j >= n_p:
        j = n_p - 1
    return i, j


@njit(cache=True)
def run_orbit(theta, p, n, lam):
    """Iterate ``n`` collisions; returns final state, total chord length and status."""
    total = 0.0
    for _ in range(n):
        theta, p, chord, status = bounce(theta, p, lam)
        if status != 0:
            return theta, p, total, status
        total += chord
    return theta, p, total, 0


@njit(cache=True)
def trace_orbit(theta, p, n, lam):
    thetas = np.empty(n + 1)
    ps = np.empty(n + 1)
    chords = np.empty(n)
    thetas[0] = theta
    ps[0] = p
    for k in range(n):
        theta, p, chord, status = bounce(theta, p, lam)
        if status != 0:
            return thetas[:k + 1], ps[:k + 1], chords[:k], status
        thetas[k + 1] = theta
        ps[k + 1] = p
        chords[k] = chord
    return thetas, ps, chords, 0


@njit(cache=True)
def accumulate_visits(theta, p, n, lam, h, s_nodes, ds_nodes, L, counts, n_checkpoints, history):
    """Add ``n`` collisions of one orbit to ``counts`` (n_q x n_p visit counts).

    ``history[c]`` receives the number of visited cells after each of
    ``n_checkpoints`` equal chunks of the orbit.
    """
    n_q = counts.shape[0]
    n_p = counts.shape[1]
    visited = 0
    for i in range(n_q):
        for j in range(n_p):
            if counts[i, j] > 0:
                visited += 1
    chunk = max(1, n // n_checkpoints)
    c = 0
    for k in range(n):
        theta, p, chord, status = bounce(theta, p, lam)
        if status != 0:
            return theta, p, status
        i, j = cell_index(theta, p, h, s_nodes, ds_nodes, L, n_q, n_p)
        if counts[i, j] == 0:
            visited += 1
        counts[i, j] += 1
        if (k + 1) % chunk == 0 and c < n_checkpoints:
            history[c] = visited
            c += 1
    while c < n_checkpoints:
        history[c] = visited
        c += 1
    return theta, p, 0


@njit(cache=True)
def classify_samples(thetas, ps, n_steps, lam, h, s_nodes, ds_nodes, L, gamma):
    """Per sample: fraction of footprint cells that are chaotic and mean chord length."""
    n_q = gamma.shape[0]
    n_p = gamma.shape[1]
    m = thetas.shape[0]
    frac = np.empty(m)
    mfp = np.empty(m)
    status_out = 0
    seen = np.zeros((n_q, n_p), dtype=np.int64)
    for a in range(m):
        theta = thetas[a]
        p = ps[a]
        stamp = a + 1
        n_cells = 0
        n_chaotic = 0
        total = 0.0
        for k in range(n_steps):
            theta, p, chord, status = bounce(theta, p, lam)
            if status != 0:
                status_out = status
                break
            total += chord
            i, j = cell_index(theta, p, h, s_nodes, ds_nodes, L, n_q, n_p)
            if seen[i, j] != stamp:
                seen[i, j] = stamp
                n_cells += 1
                if gamma[i, j] > 0:
                    n_chaotic += 1
        frac[a] = n_chaotic / max(n_cells, 1)
        mfp[a] = total / n_steps
    return frac, mfp, status_out


@njit(cache=True)
def p2_moments(thetas, ps, checkpoints, lam):
    """Sum of p^2 over the ensemble after each collision count in ``checkpoints``."""
    n_c = checkpoints.shape[0]
    sums = np.zeros(n_c)
    for a in range(thetas.shape[0]):
        theta = thetas[a]
        p = ps[a]
        done = 0
        for c in range(n_c):
            target = checkpoints[c]
            while done < target:
                theta, p, chord, status = bounce(theta, p, lam)
                if status != 0:
                    return sums, status
                done += 1
            sums[c] += p * p
    return sums, 0


@njit(cache=True)
def lyapunov_estimate(theta, p, n, lam, d0):
    """Benettin estimate from two orbits renormalized every collision."""
    th2 = theta + d0
    p2 = p
    acc = 0.0
    for _ in range(n):
        theta, p, c1, s1 = bounce(theta, p, lam)
        th2, p2, c2, s2 = bounce(th2, p2, lam)
        if s1 != 0 or s2 != 0:
            return np.nan
        dth = (th2 - theta + math.pi) % TWO_PI - math.pi
        dp = p2 - p
        d = math.hypot(dth, dp)
        if d == 0.0:
            d = 1e-300
        acc += math.log(d / d0)
        th2 = theta + dth * d0 / d
        p2 = p + dp * d0 / d
        if p2 > 1.0:
            p2 = 1.0
        elif p2 < -1.0:
            p2 = -1.0
    return acc / n
