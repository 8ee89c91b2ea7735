"""Agents, targets, third-party reporters, and their noisy sensing.

Entity states are mutated single-threaded by the episode loop; every random
draw comes from a per-entity generator derived from the episode seed, so the
outcome does not depend on iteration order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .world import GridMap, NoPathError, Path, Pose, is_free, line_of_sight, plan_path

SEARCH = "search"
TRACK = "track"

# sentinel target id carried by false-positive measurements
FALSE_POSITIVE_ID = -1


class TraceExhausted(RuntimeError):
    """Playback ran past the last sample with looping disabled."""


@dataclass(frozen=True)
class SensorModel:
    range: float
    alpha: float
    beta: float
    sigma_near: float
    sigma_far: float

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0 and 0.0 <= self.beta <= 1.0):
            raise ValueError("alpha/beta must be probabilities")
        if not (0.0 < self.sigma_near <= self.sigma_far):
            raise ValueError("need 0 < sigma_near <= sigma_far")
        if self.range <= 0:
            raise ValueError("sensor range must be positive")

    def sigma_at(self, d: float) -> float:
        """Noise std at distance d: linear between the endpoints over [0, range]."""
        frac = min(max(d / self.range, 0.0), 1.0)
        return self.sigma_near + (self.sigma_far - self.sigma_near) * frac


@dataclass
class Measurement:
    target_id: int
    position: Pose
    covariance: np.ndarray  # 2x2 SPD
    time: float
    source: int             # agent id or reporter id


@dataclass
class AgentState:
    id: int
    pose: Pose
    max_speed: float
    sensor: SensorModel
    mode: str = SEARCH
    assigned_target: int | None = None
    traveled: float = 0.0
    # cached plan toward the current waypoint command
    _goal: Pose | None = field(default=None, repr=False)
    _path: Path | None = field(default=None, repr=False)
    _wp_index: int = field(default=0, repr=False)


@dataclass
class RandomWaypoint:
    goal: Pose | None = None


@dataclass
class TracePlayback:
    samples: list[tuple[float, float, float]]  # (t, x, y), strictly increasing t
    cursor: float = 0.0
    loop: bool = False


@dataclass
class TargetState:
    id: int
    pose: Pose
    max_speed: float
    motion: RandomWaypoint | TracePlayback
    cleared: bool = False


@dataclass
class Reporter:
    id: int
    sigma_report: float
    report_period: float
    observed_targets: set[int]

    def __post_init__(self):
        if self.sigma_report <= 0 or self.report_period <= 0:
            raise ValueError("sigma_report and report_period must be positive")


# -- target kinematics -----------------------------------------------------

def _sample_free_pose(grid: GridMap, rng: np.random.Generator) -> Pose:
    free = np.flatnonzero(grid.free_mask.ravel())
    idx = int(free[rng.integers(len(free))])
    i, j = divmod(idx, grid.width_cells)
    return grid.center_of(i, j)


def _move_toward(pose: Pose, goal: Pose, dist: float) -> Pose:
    gap = pose.distance_to(goal)
    if gap <= dist or gap == 0.0:
        return Pose(goal.x, goal.y)
    f = dist / gap
    return Pose(pose.x + (goal.x - pose.x) * f, pose.y + (goal.y - pose.y) * f)


def step_target(t: TargetState, grid: GridMap, dt: float,
                rng: np.random.Generator) -> TargetState:
    """Advance one tick. Cleared targets are frozen in place."""
    if t.cleared:
        return t
    if isinstance(t.motion, RandomWaypoint):
        m = t.motion
        if m.goal is None:
            m.goal = _sample_free_pose(grid, rng)
        new = _move_toward(t.pose, m.goal, t.max_speed * dt)
        # waypoint motion may cut across obstacle corners; clip to free space
        if not is_free(grid, new) or not line_of_sight(grid, t.pose, new):
            m.goal = _sample_free_pose(grid, rng)
        else:
            t.pose = new
        if t.pose.distance_to(m.goal) <= 0.5 * grid.resolution:
            m.goal = _sample_free_pose(grid, rng)
    else:
        m = t.motion
        m.cursor += dt
        t.pose = _interp_trace(m)
    return t


def _interp_trace(m: TracePlayback) -> Pose:
    samples = m.samples
    t0, tn = samples[0][0], samples[-1][0]
    tc = m.cursor + t0
    if tc > tn:
        if not m.loop:
            raise TraceExhausted(f"playback cursor {tc} past last sample {tn}")
        span = tn - t0
        tc = t0 + ((tc - t0) % span if span > 0 else 0.0)
    lo, hi = 0, len(samples) - 1
    while lo + 1 < hi:
        mid = (lo + hi) // 2
        if samples[mid][0] <= tc:
            lo = mid
        else:
            hi = mid
    ta, xa, ya = samples[lo]
    tb, xb, yb = samples[hi]
    if tb == ta:
        return Pose(xa, ya)
    f = (tc - ta) / (tb - ta)
    f = min(max(f, 0.0), 1.0)
    return Pose(xa + (xb - xa) * f, ya + (yb - ya) * f)


# -- agent kinematics ------------------------------------------------------

def step_agent(a: AgentState, command: Pose, grid: GridMap, dt: float) -> AgentState:
    """Move along the planned grid path toward the waypoint at <= max_speed.

    The path is cached until the command changes. Raises NoPathError when the
    waypoint is unreachable.
    """
    if a._goal is None or command.distance_to(a._goal) > 1e-9:
        if command.distance_to(a.pose) <= 1e-12:
            a._goal, a._path, a._wp_index = command, Path([a.pose], 0.0), 1
        else:
            path = plan_path(grid, a.pose, command)
            # skip the start-cell center and finish at the exact commanded
            # point; both replacements stay within cells on the planned path
            wps = path.waypoints[1:] if len(path.waypoints) > 1 else []
            wps.append(command)
            a._goal, a._path, a._wp_index = command, Path(wps, path.length), 0
    budget = a.max_speed * dt
    path = a._path
    while budget > 1e-12 and a._wp_index < len(path.waypoints):
        nxt = path.waypoints[a._wp_index]
        gap = a.pose.distance_to(nxt)
        if gap <= budget:
            a.pose = Pose(nxt.x, nxt.y)
            a.traveled += gap
            budget -= gap
            a._wp_index += 1
        else:
            newp = _move_toward(a.pose, nxt, budget)
            a.traveled += a.pose.distance_to(newp)
            a.pose = newp
            budget = 0.0
    return a


# -- sensing ---------------------------------------------------------------

def visible(sensor: SensorModel, agent_pose: Pose, target_pose: Pose,
            grid: GridMap) -> bool:
    return (agent_pose.distance_to(target_pose) <= sensor.range
            and line_of_sight(grid, agent_pose, target_pose))


def sense_detect(s: SensorModel, agent_pose: Pose, target: TargetState,
                 grid: GridMap, rng: np.random.Generator) -> bool:
    """Detection roll for one target: 1-alpha if visible, beta otherwise."""
    if visible(s, agent_pose, target.pose, grid):
        return bool(rng.random() < 1.0 - s.alpha)
    return bool(rng.random() < s.beta)


def sense_locate(s: SensorModel, agent_pose: Pose, target: TargetState,
                 rng: np.random.Generator, time: float = 0.0,
                 source: int = -1) -> Measurement:
    """Noisy position of a detected target; isotropic std grows with distance."""
    d = agent_pose.distance_to(target.pose)
    sigma = s.sigma_at(d)
    noise = rng.normal(0.0, sigma, size=2)
    return Measurement(
        target_id=target.id,
        position=Pose(target.pose.x + noise[0], target.pose.y + noise[1]),
        covariance=np.eye(2) * sigma * sigma,
        time=time,
        source=source,
    )


def false_positive_measurement(s: SensorModel, agent_pose: Pose, grid: GridMap,
                               rng: np.random.Generator, time: float = 0.0,
                               source: int = -1) -> Measurement | None:
    """Spurious measurement at a uniform random in-range free position."""
    for _ in range(32):
        r = s.range * math.sqrt(rng.random())
        th = rng.random() * 2.0 * math.pi
        p = Pose(agent_pose.x + r * math.cos(th), agent_pose.y + r * math.sin(th))
        if is_free(grid, p):
            sigma = s.sigma_at(r)
            return Measurement(FALSE_POSITIVE_ID, p, np.eye(2) * sigma * sigma,
                               time, source)
    return None


def emit_report(r: Reporter, target: TargetState, t: float,
                rng: np.random.Generator) -> Measurement:
    """Third-party position report with the reporter's own noise level."""
    if target.id not in r.observed_targets:
        raise ValueError(f"reporter {r.id} does not observe target {target.id}")
    noise = rng.normal(0.0, r.sigma_report, size=2)
    return Measurement(
        target_id=target.id,
        position=Pose(target.pose.x + noise[0], target.pose.y + noise[1]),
        covariance=np.eye(2) * r.sigma_report ** 2,
        time=t,
        source=r.id,
    )
