"""Candidate trajectory generation and information-gain scoring.

Search candidates head for frontier cluster centroids along planned paths;
track candidates are constant-velocity rollouts sampled in velocity space.
Both are scored by expected map-entropy reduction (explore) and expected
track-covariance reduction (exploit), normalized per candidate set and
blended by the mode weight under a teammate-spread constraint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .belief import (
    ReportEstimate,
    SharedOccupancyBelief,
    TrackEstimate,
    cell_entropy,
    expected_entropy_after_obs,
    gaussian_entropy,
    kf_predict,
)
from .entities import AgentState, SensorModel
from .world import GridMap, NoPathError, Pose, VisibilityModel, line_of_sight, plan_path

LOOKAHEAD_STEPS = 15
STEP_DT = 0.2


@dataclass
class Frontier:
    id: int
    centroid: Pose
    member_cells: list[tuple[int, int]]

    @property
    def cluster_size(self) -> int:
        return len(self.member_cells)


@dataclass
class CandidateTrajectory:
    poses: list[Pose]              # LOOKAHEAD_STEPS poses at STEP_DT spacing
    terminal: Pose
    task: object = None            # frontier id, target id, or None for stay
    j_explore: float = 0.0         # normalized in select_best
    j_exploit: float = 0.0
    raw_explore: float = 0.0
    raw_exploit: float = 0.0
    feasible: bool = True
    score: float = 0.0


@dataclass(frozen=True)
class UtilityWeights:
    w_search: float = 0.3
    w_track: float = 0.2
    d_thre: float = 3.5


_EIGHT = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


def extract_frontiers(belief: SharedOccupancyBelief, grid: GridMap,
                      unknown_band: float = 0.1) -> list[Frontier]:
    """Known-empty cells bordering the unknown band, clustered 8-connected.

    A frontier cell has p < 0.5 - band and at least one free 8-neighbor with
    |p - 0.5| <= band. One centroid per cluster, snapped to the member cell
    nearest the cluster mean so it always lies in free space.
    """
    if not 0.0 < unknown_band < 0.5:
        raise ValueError("unknown_band must be in (0, 0.5)")
    p = belief.p
    free = grid.free_mask
    known_empty = (p < 0.5 - unknown_band) & free
    unknown = (np.abs(p - 0.5) <= unknown_band) & free
    # dilate the unknown mask so any 8-neighbor counts
    has_unknown_nbr = ndimage.binary_dilation(
        unknown, structure=np.ones((3, 3), dtype=bool))
    frontier_mask = known_empty & has_unknown_nbr
    if not frontier_mask.any():
        return []
    labels, n = ndimage.label(frontier_mask, structure=np.ones((3, 3), dtype=int))
    out = []
    for lab in range(1, n + 1):
        ii, jj = np.nonzero(labels == lab)
        ci, cj = ii.mean(), jj.mean()
        k = int(np.argmin((ii - ci) ** 2 + (jj - cj) ** 2))
        members = sorted(zip(ii.tolist(), jj.tolist()))
        out.append(Frontier(lab - 1, grid.center_of(int(ii[k]), int(jj[k])),
                            members))
    return out


def is_frontier_cell(belief: SharedOccupancyBelief, grid: GridMap,
                     i: int, j: int, unknown_band: float) -> bool:
    """Reference predicate for a single cell; mirrors extract_frontiers."""
    if not grid.is_free_cell(i, j):
        return False
    if not belief.p[i, j] < 0.5 - unknown_band:
        return False
    for di, dj in _EIGHT:
        ni, nj = i + di, j + dj
        if grid.is_free_cell(ni, nj) and abs(belief.p[ni, nj] - 0.5) <= unknown_band:
            return True
    return False


# -- candidate generation -----------------------------------------------------

def _path_rollout(agent: AgentState, goal: Pose, grid: GridMap,
                  steps: int = LOOKAHEAD_STEPS, dt: float = STEP_DT
                  ) -> list[Pose] | None:
    """Where the agent will be at each future tick following the planned path."""
    try:
        path = plan_path(grid, agent.pose, goal)
    except NoPathError:
        return None
    wps = path.waypoints[1:] if len(path.waypoints) > 1 else []
    wps.append(goal)
    poses = []
    cur = agent.pose
    wi = 0
    speed = agent.max_speed
    for _ in range(steps):
        budget = speed * dt
        while budget > 1e-12 and wi < len(wps):
            gap = cur.distance_to(wps[wi])
            if gap <= budget:
                cur = wps[wi]
                budget -= gap
                wi += 1
            else:
                f = budget / gap
                cur = Pose(cur.x + (wps[wi].x - cur.x) * f,
                           cur.y + (wps[wi].y - cur.y) * f)
                budget = 0.0
        poses.append(cur)
    return poses


def gen_search_candidates(agent: AgentState, frontiers: list[Frontier],
                          grid: GridMap) -> list[CandidateTrajectory]:
    """One candidate per reachable frontier centroid."""
    out = []
    for fr in frontiers:
        poses = _path_rollout(agent, fr.centroid, grid)
        if poses is None:
            continue
        out.append(CandidateTrajectory(poses, poses[-1], task=("frontier", fr.id)))
    return out


def gen_track_candidates(agent: AgentState, predicted_target: np.ndarray | None,
                         grid: GridMap, n_headings: int = 8, n_speeds: int = 2,
                         target_id: int | None = None) -> list[CandidateTrajectory]:
    """Velocity-space rollouts: n_headings x n_speeds plus the stay candidate.

    Samples colliding with obstacles are discarded; speeds never exceed the
    agent's limit.
    """
    if n_headings < 4 or n_speeds < 2:
        raise ValueError("need n_headings >= 4 and n_speeds >= 2")
    task = ("target", target_id)
    out = [CandidateTrajectory([agent.pose] * LOOKAHEAD_STEPS, agent.pose,
                               task=task)]
    for hi in range(n_headings):
        th = 2.0 * math.pi * hi / n_headings
        for si in range(1, n_speeds + 1):
            speed = agent.max_speed * si / n_speeds
            vx, vy = speed * math.cos(th), speed * math.sin(th)
            poses = []
            ok = True
            prev = agent.pose
            for k in range(1, LOOKAHEAD_STEPS + 1):
                p = Pose(agent.pose.x + vx * k * STEP_DT,
                         agent.pose.y + vy * k * STEP_DT)
                if not line_of_sight(grid, prev, p):
                    ok = False
                    break
                poses.append(p)
                prev = p
            if ok:
                out.append(CandidateTrajectory(poses, poses[-1], task=task))
    return out


# -- information gains ----------------------------------------------------------

def j_explore(belief: SharedOccupancyBelief, tau: CandidateTrajectory,
              sensor: SensorModel, grid: GridMap,
              visibility: VisibilityModel | None = None) -> float:
    """Expected map-entropy reduction (bits) over cells freshly swept by tau.

    Each cell covered by the trajectory's FoV counts once; its contribution
    is prior entropy minus expected posterior entropy under the detection
    model at the current belief.
    """
    if visibility is None:
        visibility = VisibilityModel(grid, sensor.range)
    fresh: list[np.ndarray] = []
    seen: set[int] = set()
    last_cell = None
    for pose in tau.poses:
        cell = grid.cell_of(pose.x, pose.y)
        if cell is None or cell == last_cell:
            continue
        last_cell = cell
        vis = visibility.visible_from(cell)
        if vis.size:
            new = [v for v in vis.tolist() if v not in seen]
            if new:
                seen.update(new)
                fresh.append(np.array(new, dtype=np.int64))
    if not fresh:
        return 0.0
    idx = np.concatenate(fresh)
    p = belief.p.ravel()[idx]
    gain = cell_entropy(p) - expected_entropy_after_obs(p, sensor.alpha, sensor.beta)
    return float(np.maximum(gain, 0.0).sum())


def j_exploit(tracks: list[TrackEstimate], reports: list[ReportEstimate],
              tau: CandidateTrajectory, sensor: SensorModel, grid: GridMap,
              q: float = 0.04, predictions: dict[int, np.ndarray] | None = None
              ) -> float:
    """Expected Gaussian-entropy reduction (nats) over targets tau approaches.

    For each uncleared track (and each report estimate), the prior covariance
    is propagated to the closest-approach pose time; the posterior simulates
    one measurement with distance-dependent noise there. Targets never
    entering sensing range contribute nothing.
    """
    predictions = predictions or {}
    total = 0.0
    for e in tracks:
        if e.cleared:
            continue
        pred = predictions.get(e.target_id)
        total += _exploit_one(e.covariance, e.mean, pred, tau, sensor, grid, q)
    for r in reports:
        total += _exploit_one(r.covariance, r.mean, None, tau, sensor, grid, q)
    return total


def _exploit_one(cov: np.ndarray, mean: np.ndarray, pred: np.ndarray | None,
                 tau: CandidateTrajectory, sensor: SensorModel, grid: GridMap,
                 q: float) -> float:
    best_k, best_d = -1, math.inf
    for k, pose in enumerate(tau.poses):
        tp = mean if pred is None else pred[min(k, len(pred) - 1)]
        d = math.hypot(pose.x - tp[0], pose.y - tp[1])
        if d <= sensor.range and d < best_d:
            tgt = Pose(float(tp[0]), float(tp[1]))
            if line_of_sight(grid, pose, tgt):
                best_k, best_d = k, d
    if best_k < 0:
        return 0.0
    dt_to = (best_k + 1) * STEP_DT
    prior = cov + q * dt_to * np.eye(2)
    sigma = sensor.sigma_at(best_d)
    r = np.eye(2) * sigma * sigma
    gain_m = prior @ np.linalg.inv(prior + r)
    post = (np.eye(2) - gain_m) @ prior
    post = 0.5 * (post + post.T)
    try:
        return max(0.0, gaussian_entropy(prior) - gaussian_entropy(post))
    except ValueError:
        return 0.0


# -- selection --------------------------------------------------------------------

def select_best(cands: list[CandidateTrajectory], mode: str,
                weights: UtilityWeights,
                teammate_terminals: list[Pose] | None = None
                ) -> CandidateTrajectory:
    """Normalize gains, apply the spread constraint, and take the argmax.

    Candidates whose terminal lies within d_thre of a teammate terminal are
    discarded; if that empties the set the constraint is relaxed. Ties break
    on the lowest candidate index, so selection is deterministic.
    """
    if not cands:
        raise ValueError("candidate set must be non-empty")
    teammate_terminals = teammate_terminals or []
    max_e = max(c.raw_explore for c in cands)
    max_x = max(c.raw_exploit for c in cands)
    w = weights.w_search if mode == "search" else weights.w_track
    for c in cands:
        c.j_explore = c.raw_explore / max_e if max_e > 0 else 0.0
        c.j_exploit = c.raw_exploit / max_x if max_x > 0 else 0.0
        c.score = w * c.j_explore + (1.0 - w) * c.j_exploit

    def spread_ok(c: CandidateTrajectory) -> bool:
        return all(c.terminal.distance_to(t) >= weights.d_thre
                   for t in teammate_terminals)

    pool = [(k, c) for k, c in enumerate(cands) if spread_ok(c)]
    if not pool:
        pool = list(enumerate(cands))
    best_k, best = pool[0]
    for k, c in pool[1:]:
        if c.score > best.score:
            best_k, best = k, c
    return best
