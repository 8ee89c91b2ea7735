"""Probabilistic state: occupancy beliefs, Gaussian tracks, fusion, entropy.

Occupancy cells are independent Bernoulli variables over target presence.
Cells outside every field of view relax exponentially toward the 0.5 prior
(targets move, so old knowledge expires); cells in view take Bayes updates
from the detection model. Track estimates are Gaussian posteriors maintained
by a random-walk Kalman filter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .entities import SensorModel
from .world import GridMap, Pose, VisibilityModel

LN2 = math.log(2.0)


class AllZeroTrust(ValueError):
    """Every fusion source reported zero information."""


# -- entropy helpers --------------------------------------------------------

def cell_entropy(p):
    """Bernoulli entropy in bits, elementwise; 0*log0 := 0."""
    p = np.asarray(p, dtype=float)
    q = 1.0 - p
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(p * np.log2(np.where(p > 0.0, p, 1.0))
              + q * np.log2(np.where(q > 0.0, q, 1.0)))
    return h if h.ndim else float(h)


def expected_entropy_after_obs(p, alpha: float, beta: float):
    """Expected Bernoulli entropy after one detection roll under (alpha, beta).

    Averages the posterior entropy over both measurement outcomes, weighted
    by their marginal probabilities under the current belief. Never exceeds
    the prior entropy (information never hurts in expectation).
    """
    p = np.asarray(p, dtype=float)
    p_det = (1.0 - alpha) * p + beta * (1.0 - p)
    p_nod = alpha * p + (1.0 - beta) * (1.0 - p)
    with np.errstate(divide="ignore", invalid="ignore"):
        post_det = np.where(p_det > 0.0, (1.0 - alpha) * p / np.where(p_det > 0, p_det, 1.0), p)
        post_nod = np.where(p_nod > 0.0, alpha * p / np.where(p_nod > 0, p_nod, 1.0), p)
    h = p_det * cell_entropy(post_det) + p_nod * cell_entropy(post_nod)
    return h if h.ndim else float(h)


def gaussian_entropy(cov: np.ndarray) -> float:
    """Differential entropy of a 2-D Gaussian, in nats."""
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (2, 2) or not np.allclose(cov, cov.T, atol=1e-9):
        raise ValueError("covariance must be symmetric 2x2")
    det = cov[0, 0] * cov[1, 1] - cov[0, 1] * cov[1, 0]
    if det <= 0.0 or cov[0, 0] <= 0.0:
        raise ValueError("covariance must be positive definite")
    return 0.5 * math.log((2.0 * math.pi * math.e) ** 2 * det)


# -- occupancy beliefs -------------------------------------------------------

class OccupancyBelief:
    """Per-source Bernoulli belief over target presence, one value per cell.

    ``base``/``last_seen`` record the value and time of the last in-FoV
    update so decay follows the closed form from that anchor rather than
    accumulating per-tick error. Never-observed cells hold exactly 0.5.
    """

    def __init__(self, grid: GridMap, owner: int = 0,
                 decay_rate: float = 1.0 / 90.0):
        self.grid = grid
        self.owner = owner
        self.decay_rate = float(decay_rate)
        shape = (grid.height_cells, grid.width_cells)
        self.p = np.full(shape, 0.5)
        self.base = np.full(shape, 0.5)
        self.last_seen = np.full(shape, np.nan)

    def copy(self) -> "OccupancyBelief":
        b = OccupancyBelief(self.grid, self.owner, self.decay_rate)
        b.p = self.p.copy()
        b.base = self.base.copy()
        b.last_seen = self.last_seen.copy()
        return b

    def map_entropy(self) -> float:
        """Total entropy (bits) over free cells."""
        return float(cell_entropy(self.p[self.grid.free_mask]).sum())

    def sparse_cells(self, eps: float = 0.01) -> list[tuple[int, float]]:
        """(flat cell index, p) for every cell with |p - 0.5| > eps."""
        flat = self.p.ravel()
        idx = np.flatnonzero(np.abs(flat - 0.5) > eps)
        return [(int(i), float(flat[i])) for i in idx]


def observe_cells(b: OccupancyBelief, agent_pose: Pose, sensor: SensorModel,
                  detections, grid: GridMap, t: float,
                  visibility: VisibilityModel | None = None) -> OccupancyBelief:
    """Bayes-update every visible free cell from one sensing tick.

    Cells containing a detection take positive evidence with likelihood
    ratio (1-alpha)/beta; visible cells without a detection take negative
    evidence with ratio alpha/(1-beta). last_seen is stamped for all of them.
    """
    cell = grid.cell_of(agent_pose.x, agent_pose.y)
    if cell is None:
        return b
    if visibility is None:
        visibility = VisibilityModel(grid, sensor.range)
    vis = visibility.visible_from(cell)
    if vis.size == 0:
        return b
    det_cells = set()
    for m in detections:
        c = grid.cell_of(m.position.x, m.position.y)
        if c is not None:
            det_cells.add(c[0] * grid.width_cells + c[1])
    a, beta = sensor.alpha, sensor.beta
    flat_p = b.p.ravel()
    pos_mask = np.isin(vis, np.fromiter(det_cells, dtype=np.int64)) if det_cells else \
        np.zeros(vis.shape, dtype=bool)
    p = flat_p[vis]
    num = np.where(pos_mask, (1.0 - a) * p, a * p)
    den = np.where(pos_mask, (1.0 - a) * p + beta * (1.0 - p),
                   a * p + (1.0 - beta) * (1.0 - p))
    post = np.where(den > 0.0, num / np.where(den > 0.0, den, 1.0), p)
    flat_p[vis] = post
    b.base.ravel()[vis] = post
    b.last_seen.ravel()[vis] = t
    return b


def apply_time_decay(b: OccupancyBelief, t: float, num_detected: int,
                     num_total: int | None = None) -> OccupancyBelief:
    """Relax out-of-view observed cells toward 0.5 from their last anchor.

    Low cells (p < 0.5, searched-and-empty) stop decaying once every target
    has been detected; high cells (a target was seen there) always decay
    while out of view.
    """
    stale = ~np.isnan(b.last_seen) & (b.last_seen < t)
    if not stale.any():
        return b
    dt = t - b.last_seen[stale]
    decayed = 0.5 + (b.base[stale] - 0.5) * np.exp(-b.decay_rate * dt)
    low = b.base[stale] < 0.5
    high = b.base[stale] > 0.5
    cur = b.p[stale]
    sel = high.copy()
    if num_total is None or num_detected < num_total:
        sel |= low
    cur[sel] = decayed[sel]
    b.p[stale] = cur
    return b


@dataclass
class SharedOccupancyBelief:
    grid: GridMap
    p: np.ndarray
    weights: dict[int, float]

    def map_entropy(self) -> float:
        return float(cell_entropy(self.p[self.grid.free_mask]).sum())


def fuse_occupancy(beliefs: list[tuple[OccupancyBelief, float]]
                   ) -> SharedOccupancyBelief:
    """Trust-weighted average of per-source beliefs.

    Weights are the sources' information traces normalized to sum to one;
    a higher trace (lower uncertainty) earns a larger share.
    """
    if not beliefs:
        raise ValueError("need at least one belief to fuse")
    traces = np.array([max(0.0, tr) for _, tr in beliefs], dtype=float)
    total = traces.sum()
    if total <= 0.0:
        raise AllZeroTrust("all fusion sources have zero information trace")
    w = traces / total
    grid = beliefs[0][0].grid
    fused = np.zeros_like(beliefs[0][0].p)
    weights: dict[int, float] = {}
    for (bel, _), wi in zip(beliefs, w):
        fused += wi * bel.p
        weights[bel.owner] = weights.get(bel.owner, 0.0) + float(wi)
    return SharedOccupancyBelief(grid, fused, weights)


# -- Gaussian track estimates ------------------------------------------------

@dataclass
class TrackEstimate:
    target_id: int
    mean: np.ndarray          # (2,)
    covariance: np.ndarray    # 2x2 SPD
    last_update: float = 0.0
    monitoring_time: float = 0.0
    cleared: bool = False


@dataclass
class ReportEstimate:
    target_id: int
    mean: np.ndarray
    covariance: np.ndarray
    reporter_id: int
    time: float


def kf_predict(e: TrackEstimate, dt: float, q: float) -> TrackEstimate:
    """Random-walk prediction: mean fixed, covariance inflated by q*dt*I."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    cov = e.covariance + q * dt * np.eye(2)
    return replace(e, mean=e.mean.copy(), covariance=cov)


def kf_update(e: TrackEstimate, z) -> TrackEstimate:
    """Gaussian Bayes update with identity measurement function."""
    r = np.asarray(z.covariance, dtype=float)
    pos = np.array([z.position.x, z.position.y], dtype=float)
    p = e.covariance
    s = p + r
    k = p @ np.linalg.inv(s)
    mean = e.mean + k @ (pos - e.mean)
    cov = (np.eye(2) - k) @ p
    cov = 0.5 * (cov + cov.T)
    return replace(e, mean=mean, covariance=cov, last_update=z.time)


def is_tracked(e: TrackEstimate, sigma_thre_trace: float) -> bool:
    """Tracking completes when the covariance trace falls to the threshold."""
    return float(np.trace(e.covariance)) <= sigma_thre_trace


def information_trace(tracks, sensor: SensorModel) -> float:
    """Scalar trust for belief fusion: summed information of live tracks
    plus the sensor's intrinsic measurement information.

    The sensor floor keeps the trace positive (and heterogeneously ranked)
    when a source has no tracks yet.
    """
    total = 2.0 / (sensor.sigma_far ** 2)
    for e in tracks:
        if e.cleared:
            continue
        total += float(np.trace(np.linalg.inv(e.covariance)))
    return total
