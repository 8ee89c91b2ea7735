"""Default experiment parameters and heterogeneous sensor sampling.

All values live here once; scenario JSON may override any field. Loading a
scenario with target speed >= agent speed is rejected (the chase must be
winnable).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Defaults:
    target_speed: float = 0.2          # m/s
    agent_speed: float = 0.4           # m/s
    sensor_range: float = 6.0          # m, homogeneous default inside [5, 8]
    sensor_range_lo: float = 5.0
    sensor_range_hi: float = 8.0
    alpha: float = 0.1                 # false-negative rate, inside [0.08, 0.2]
    alpha_lo: float = 0.08
    alpha_hi: float = 0.2
    beta: float = 0.0                  # false-positive rate
    sigma_near: float = 0.7            # m, measurement noise at distance 0
    sigma_far: float = 1.3             # m, measurement noise at full range
    sigma_lo: float = 0.7
    sigma_hi: float = 1.3
    sigma_report_lo: float = 0.5       # m, third-party report noise range
    sigma_report_hi: float = 1.0
    decay_rate: float = 1.0 / 90.0     # 1/s, relaxation toward 0.5
    w_search: float = 0.3
    w_track: float = 0.2
    d_thre: float = 3.5                # m, minimum terminal spread
    sigma_thre_trace: float = 2.0      # m^2, tracking-completion threshold
    sensor_dt: float = 0.2             # s, sensing / kinematics tick
    plan_period: float = 1.0           # s, planning & auction cadence
    lookahead_steps: int = 15          # candidate horizon in sensor ticks
    history_steps: int = 10            # predictor input window
    time_cap: float = 300.0            # s
    resolution: float = 1.0            # m per grid cell
    unknown_band: float = 0.1          # frontier band half-width around 0.5
    hold_time: float = 5.0             # s, tracking-assignment hysteresis
    report_period: float = 5.0         # s, third-party report cadence


DEFAULTS = Defaults()


class ConfigError(ValueError):
    """Raised when a scenario violates a model assumption."""


def validate_speeds(target_speed: float, agent_speed: float) -> None:
    if not target_speed < agent_speed:
        raise ConfigError(
            f"target speed {target_speed} must be < agent speed {agent_speed}"
        )


def heterogeneous_sample(rng: np.random.Generator, n_agents: int,
                         defaults: Defaults = DEFAULTS) -> list[dict]:
    """Draw per-agent sensor parameters uniformly from the default ranges.

    Returns plain dicts (range/alpha/beta/sigma_near/sigma_far) so callers
    can build their own SensorModel type without an import cycle.
    """
    if n_agents < 1:
        raise ConfigError("need at least one agent")
    out = []
    for _ in range(n_agents):
        vr = float(rng.uniform(defaults.sensor_range_lo, defaults.sensor_range_hi))
        alpha = float(rng.uniform(defaults.alpha_lo, defaults.alpha_hi))
        s1 = float(rng.uniform(defaults.sigma_lo, defaults.sigma_hi))
        s2 = float(rng.uniform(defaults.sigma_lo, defaults.sigma_hi))
        out.append({
            "range": vr,
            "alpha": alpha,
            "beta": defaults.beta,
            "sigma_near": min(s1, s2),
            "sigma_far": max(s1, s2),
        })
    return out
