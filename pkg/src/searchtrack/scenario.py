"""Scenario configuration: dataclasses, JSON loading, and validation."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

from .config import DEFAULTS, ConfigError, validate_speeds

POLICIES = ("hybrid", "random", "independent", "central-kf", "exhaustive", "swarm")


@dataclass
class AgentSpec:
    start: tuple[float, float] | None = None
    max_speed: float = DEFAULTS.agent_speed
    range: float = DEFAULTS.sensor_range
    alpha: float = DEFAULTS.alpha
    beta: float = DEFAULTS.beta
    sigma_near: float = DEFAULTS.sigma_near
    sigma_far: float = DEFAULTS.sigma_far


@dataclass
class TargetSpec:
    start: tuple[float, float] | None = None
    max_speed: float = DEFAULTS.target_speed
    motion: str = "random_waypoint"       # or "trace"
    trace_file: str | None = None
    loop_trace: bool = False


@dataclass
class ReporterSpec:
    sigma_report: float = 0.75
    report_period: float = DEFAULTS.report_period
    observed_targets: list[int] = field(default_factory=list)


@dataclass
class Toggles:
    tr: bool = True     # third-party reporting
    tv: bool = True     # time-varying occupancy decay
    lstm: bool = True   # learned long-horizon prediction (else Kalman CV)


@dataclass
class ScenarioConfig:
    map_path: str
    agents: list[AgentSpec]
    targets: list[TargetSpec]
    reporters: list[ReporterSpec] = field(default_factory=list)
    policy: str = "hybrid"
    w_search: float = DEFAULTS.w_search
    w_track: float = DEFAULTS.w_track
    d_thre: float = DEFAULTS.d_thre
    sigma_thre_trace: float = DEFAULTS.sigma_thre_trace
    decay_rate: float = DEFAULTS.decay_rate
    unknown_band: float = DEFAULTS.unknown_band
    hold_time: float = DEFAULTS.hold_time
    toggles: Toggles = field(default_factory=Toggles)
    p_cf: float = 0.0
    p_ef: float = 0.0
    p_fp: float = 0.0                 # injected as the sensor beta
    heterogeneous: bool = False
    time_cap: float = DEFAULTS.time_cap   # 0 = unlimited
    seed: int = 0
    predictor_weights: str | None = None
    name: str = "scenario"

    def validate(self) -> None:
        if len(self.agents) < 1:
            raise ConfigError("need at least one agent")
        if len(self.targets) < 1:
            raise ConfigError("need at least one target")
        if self.policy not in POLICIES:
            raise ConfigError(f"unknown policy {self.policy!r}")
        for t in self.targets:
            for a in self.agents:
                validate_speeds(t.max_speed, a.max_speed)
            if t.motion not in ("random_waypoint", "trace"):
                raise ConfigError(f"unknown motion {t.motion!r}")
            if t.motion == "trace" and not t.trace_file:
                raise ConfigError("trace motion requires trace_file")
        for p, nm in ((self.p_cf, "p_cf"), (self.p_ef, "p_ef"), (self.p_fp, "p_fp")):
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{nm} must be in [0, 1]")
        if self.time_cap < 0:
            raise ConfigError("time_cap must be >= 0")
        for r in self.reporters:
            for tid in r.observed_targets:
                if not 0 <= tid < len(self.targets):
                    raise ConfigError(f"reporter observes unknown target {tid}")


def scenario_from_dict(d: dict) -> ScenarioConfig:
    d = dict(d)
    agents = [AgentSpec(**{**a, "start": tuple(a["start"]) if a.get("start") else None})
              for a in d.pop("agents")]
    targets = [TargetSpec(**{**t, "start": tuple(t["start"]) if t.get("start") else None})
               for t in d.pop("targets")]
    reporters = [ReporterSpec(**r) for r in d.pop("reporters", [])]
    toggles = Toggles(**d.pop("toggles", {}))
    cfg = ScenarioConfig(agents=agents, targets=targets, reporters=reporters,
                         toggles=toggles, **d)
    cfg.validate()
    return cfg


def load_scenario(path: str) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as f:
        return scenario_from_dict(json.load(f))


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    return asdict(cfg)


def save_scenario(cfg: ScenarioConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(scenario_to_dict(cfg), f, indent=2, sort_keys=True)


def open_arena_config(n_agents: int, n_targets: int, size: int = 50,
                      **overrides) -> ScenarioConfig:
    """Convenience builder for the open square arena used in benchmarks.

    The map file must exist at map_path before running; see
    make_open_map_file.
    """
    # two external sources of different quality; the last target goes
    # unreported so every mission keeps a pure-search component
    reported = list(range(max(1, n_targets - 1)))
    reporters = [
        ReporterSpec(sigma_report=0.6, observed_targets=reported[0::2]),
        ReporterSpec(sigma_report=0.9, observed_targets=reported[1::2]),
    ]
    reporters = [r for r in reporters if r.observed_targets]
    cfg = ScenarioConfig(
        map_path=overrides.pop("map_path", f"open{size}.map"),
        agents=[AgentSpec() for _ in range(n_agents)],
        targets=[TargetSpec() for _ in range(n_targets)],
        reporters=overrides.pop("reporters", reporters),
        **overrides,
    )
    cfg.validate()
    return cfg


def make_open_map_file(path: str, size: int = 50, resolution: float = 1.0) -> None:
    lines = [f"{size} {size} {resolution}"]
    lines += ["." * size] * size
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
