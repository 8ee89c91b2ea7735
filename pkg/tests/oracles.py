"""Independent reference implementations the main code is checked against.

These deliberately share no code with the package: Dijkstra uses a plain
distance table over the same 8-connected move set, line-of-sight enumerates
crossed cells from first principles, and the Bayes filter is a brute-force
grid over the 1-D posterior.
"""

import heapq
import math

import numpy as np

SQRT2 = math.sqrt(2.0)


def dijkstra_cost(cells: np.ndarray, start: tuple[int, int],
                  goal: tuple[int, int]) -> float | None:
    """Grid-optimal 8-connected cost in cell units; None if unreachable.

    Diagonal moves cost sqrt(2) and require both orthogonal neighbors free
    (same movement rule as the planner, implemented independently).
    """
    h, w = cells.shape

    def free(i, j):
        return 0 <= i < h and 0 <= j < w and cells[i, j] == 0

    if not (free(*start) and free(*goal)):
        return None
    dist = {start: 0.0}
    heap = [(0.0, start)]
    done = set()
    while heap:
        d, cur = heapq.heappop(heap)
        if cur in done:
            continue
        if cur == goal:
            return d
        done.add(cur)
        i, j = cur
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                if di == 0 and dj == 0:
                    continue
                ni, nj = i + di, j + dj
                if not free(ni, nj):
                    continue
                if di != 0 and dj != 0 and not (free(i, nj) and free(ni, j)):
                    continue
                step = SQRT2 if di != 0 and dj != 0 else 1.0
                nd = d + step
                if nd < dist.get((ni, nj), math.inf) - 1e-12:
                    dist[(ni, nj)] = nd
                    heapq.heappush(heap, (nd, (ni, nj)))
    return None


def crossed_cells(height: int, resolution: float, a, b, samples: int = 4000):
    """Cells touched by segment a->b, by brute-force dense sampling."""
    out = set()
    for k in range(samples + 1):
        f = k / samples
        x = a[0] + (b[0] - a[0]) * f
        y = a[1] + (b[1] - a[1]) * f
        j = int(math.floor(x / resolution))
        i = height - 1 - int(math.floor(y / resolution))
        out.add((i, j))
    return out


def grid_bayes_1d(prior_mean: float, prior_var: float, z: float,
                  meas_var: float, step: float = 1e-3, span: float = 6.0):
    """Brute-force 1-D Bayes posterior on a dense grid over +/- span sigma."""
    sigma = math.sqrt(prior_var)
    lo = min(prior_mean, z) - span * sigma
    hi = max(prior_mean, z) + span * sigma
    xs = np.arange(lo, hi + step, step)
    prior = np.exp(-0.5 * (xs - prior_mean) ** 2 / prior_var)
    like = np.exp(-0.5 * (xs - z) ** 2 / meas_var)
    post = prior * like
    post /= post.sum()
    mean = float((xs * post).sum())
    var = float(((xs - mean) ** 2 * post).sum())
    return mean, var


def frontier_scan(p: np.ndarray, free: np.ndarray, band: float):
    """Cell-by-cell frontier predicate applied literally."""
    h, w = p.shape
    out = set()
    for i in range(h):
        for j in range(w):
            if not free[i, j] or not p[i, j] < 0.5 - band:
                continue
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    if di == 0 and dj == 0:
                        continue
                    ni, nj = i + di, j + dj
                    if (0 <= ni < h and 0 <= nj < w and free[ni, nj]
                            and abs(p[ni, nj] - 0.5) <= band):
                        out.add((i, j))
    return out
