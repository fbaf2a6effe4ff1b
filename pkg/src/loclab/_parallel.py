from concurrent.futures import ProcessPoolExecutor

import numpy as np


def split(n, parts):
    """Contiguous index ranges covering ``range(n)``."""
    edges = np.linspace(0, n, max(1, parts) + 1).astype(int)
    return [(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def run_chunks(func, argsets, jobs=1):
    """Apply ``func(*args)`` to each argument tuple, in order.

    With ``jobs > 1`` the calls go to a process pool; results come back in
    submission order so merged output does not depend on ``jobs``.
    """
    if jobs <= 1 or len(argsets) <= 1:
        return [func(*a) for a in argsets]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(func, *a) for a in argsets]
        return [f.result() for f in futures]
