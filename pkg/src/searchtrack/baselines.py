"""The five comparison policies sharing the engine's world and sensor code.

random-walk: random frontier / chase last known position.
independent: the full per-agent pipeline with the bus disabled and Kalman
  constant-velocity prediction.
central-kf: HQ auctions without time-varying decay, exploration-only search
  scoring, Kalman prediction.
exhaustive: Voronoi partition + boustrophedon sweeps, Kalman chase.
swarm: force-based cohesion/separation/patrol/pursuit, open maps only.
"""

from __future__ import annotations

import math

import numpy as np

from .planning import (
    LOOKAHEAD_STEPS,
    STEP_DT,
    CandidateTrajectory,
    _path_rollout,
)
from .world import GridMap, Path, Pose


def voronoi_partition(grid: GridMap, agent_positions: list[Pose]) -> np.ndarray:
    """Assign every free cell to the nearest agent start (ties: lowest id).

    Returns an (H, W) int array of agent indices, -1 on obstacles.
    """
    if len(set((p.x, p.y) for p in agent_positions)) != len(agent_positions):
        raise ValueError("agent positions must be distinct")
    h, w = grid.height_cells, grid.width_cells
    ii, jj = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    xs = (jj + 0.5) * grid.resolution
    ys = (h - 1 - ii + 0.5) * grid.resolution
    best_d = np.full((h, w), np.inf)
    labels = np.full((h, w), -1, dtype=np.int64)
    for k, p in enumerate(agent_positions):
        d = (xs - p.x) ** 2 + (ys - p.y) ** 2
        better = d < best_d - 1e-12
        best_d = np.where(better, d, best_d)
        labels = np.where(better, k, labels)
    labels[grid.obstacle_mask] = -1
    return labels


def boustrophedon_path(region: np.ndarray, grid: GridMap,
                       row_spacing_cells: int = 1) -> Path:
    """Serpentine sweep visiting every contiguous run of region cells.

    Sweep rows are spaced ``row_spacing_cells`` apart (plus the final row);
    runs alternate direction per row. Consecutive waypoints in different
    runs are connected by the follower's path planner, so disconnected
    regions are still covered.
    """
    ii, jj = np.nonzero(region)
    if ii.size == 0:
        raise ValueError("empty region")
    rows = sorted(set(ii.tolist()))
    sweep_rows = rows[::max(1, row_spacing_cells)]
    if rows[-1] not in sweep_rows:
        sweep_rows.append(rows[-1])
    waypoints: list[Pose] = []
    direction = 1
    for i in sweep_rows:
        cols = sorted(np.nonzero(region[i])[0].tolist())
        if not cols:
            continue
        runs = []
        start = prev = cols[0]
        for c in cols[1:]:
            if c == prev + 1:
                prev = c
            else:
                runs.append((start, prev))
                start = prev = c
        runs.append((start, prev))
        if direction < 0:
            runs = [(b, a) for a, b in reversed(runs)]
        for a, b in runs:
            waypoints.append(grid.center_of(i, a))
            if b != a:
                waypoints.append(grid.center_of(i, b))
        direction = -direction
    length = sum(waypoints[k].distance_to(waypoints[k + 1])
                 for k in range(len(waypoints) - 1))
    return Path(waypoints, length)


# -- policy step functions ---------------------------------------------------

def random_walk_step(agent_pose: Pose, max_speed: float, frontiers,
                     last_known: Pose | None, grid: GridMap,
                     rng: np.random.Generator) -> CandidateTrajectory:
    """Uniform random frontier centroid, or chase the last known position."""
    stay = CandidateTrajectory([agent_pose] * LOOKAHEAD_STEPS, agent_pose)
    if last_known is not None:
        goal = last_known
    elif frontiers:
        goal = frontiers[int(rng.integers(len(frontiers)))].centroid
    else:
        return stay
    traj = _rollout(agent_pose, max_speed, goal, grid)
    if traj is None:
        return stay
    traj.task = ("goal", (goal.x, goal.y))
    return traj


def _rollout(pose: Pose, speed: float, goal: Pose, grid: GridMap
             ) -> CandidateTrajectory | None:
    from .entities import AgentState, SensorModel  # cycle guard
    shim = AgentState(-1, pose, speed,
                      SensorModel(1.0, 0.0, 0.0, 0.1, 0.1))
    ps = _path_rollout(shim, goal, grid)
    if ps is None:
        return None
    return CandidateTrajectory(ps, ps[-1])


def swarm_step(positions: list[Pose], max_speed: float, d_thre: float,
               target_seen: Pose | None, grid: GridMap, t: float,
               n_agents: int | None = None) -> list[np.ndarray]:
    """Force-blended velocities for the whole swarm.

    Separation ~ d_thre^2/d^2 balances unit cohesion at exactly d_thre;
    patrol headings rotate on a shared schedule with evenly spread phases
    (net force zero over the ring); a seen target dominates everything.
    """
    n = n_agents or len(positions)
    cen_x = sum(p.x for p in positions) / len(positions)
    cen_y = sum(p.y for p in positions) / len(positions)
    k_sep = d_thre ** 2
    k_coh = 1.0 / max(d_thre, 1e-9)
    k_patrol = 0.8
    k_attract = 4.0
    out = []
    for i, p in enumerate(positions):
        f = np.zeros(2)
        for j, q in enumerate(positions):
            if i == j:
                continue
            dx, dy = p.x - q.x, p.y - q.y
            d = math.hypot(dx, dy)
            if 1e-9 < d < d_thre:
                f += k_sep / (d * d) * np.array([dx / d, dy / d])
        f += k_coh * np.array([cen_x - p.x, cen_y - p.y])
        th = 2.0 * math.pi * (t / 150.0 + i / max(n, 1))
        f += k_patrol * np.array([math.cos(th), math.sin(th)])
        if target_seen is not None:
            f += k_attract * np.array([target_seen.x - p.x, target_seen.y - p.y])
        norm = float(np.linalg.norm(f))
        out.append(f / norm * max_speed if norm > 1e-12 else np.zeros(2))
    return out


def swarm_trajectory(pose: Pose, velocity: np.ndarray, grid: GridMap
                     ) -> CandidateTrajectory:
    """Straight rollout of a swarm velocity, stopping at the free-space edge."""
    from .world import is_free
    poses = []
    cur = pose
    for _ in range(LOOKAHEAD_STEPS):
        nxt = Pose(cur.x + float(velocity[0]) * STEP_DT,
                   cur.y + float(velocity[1]) * STEP_DT)
        if not is_free(grid, nxt):
            nxt = cur
        poses.append(nxt)
        cur = nxt
    return CandidateTrajectory(poses, poses[-1])
