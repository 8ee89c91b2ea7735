"""Episode core: the fixed-step, seeded, fully deterministic simulation loop.

One tick is 0.2 s (sensing and kinematics); planning and auctions run every
fifth tick. Within a tick the order is: targets move, agents sense and
filter, messages deliver, beliefs decay, the planning phase (HQ auctions
then per-agent decisions), agents move, clears fire. Every random draw
comes from a stream derived from the episode seed, so identical
(config, seed) pairs produce identical traces event for event.

Task commitments persist across cycles: a search winner pursues its
frontier until it is reached or stops being a frontier, and a tracker holds
its target through the hysteresis window. Committed agents re-plan their
trajectory toward the committed goal every cycle.
"""

from __future__ import annotations

import math
from collections import deque

import numpy as np

from . import ENGINE_VERSION
from .baselines import (
    boustrophedon_path,
    random_walk_step,
    swarm_step,
    swarm_trajectory,
    voronoi_partition,
)
from .belief import (
    OccupancyBelief,
    ReportEstimate,
    SharedOccupancyBelief,
    TrackEstimate,
    apply_time_decay,
    cell_entropy,
    gaussian_entropy,
    information_trace,
    is_tracked,
    kf_predict,
    kf_update,
    observe_cells,
)
from .config import ConfigError, DEFAULTS, heterogeneous_sample
from .coordination import (
    CH_AGENT,
    CH_HQ,
    CH_REPORT,
    Assignment,
    Bid,
    DetectorReport,
    HQState,
    Message,
    MessageBus,
    TargetRecord,
    hq_assign_search,
    hq_assign_tracking,
)
from .entities import (
    FALSE_POSITIVE_ID,
    SEARCH,
    TRACK,
    AgentState,
    Measurement,
    RandomWaypoint,
    Reporter,
    SensorModel,
    TargetState,
    TracePlayback,
    emit_report,
    false_positive_measurement,
    sense_detect,
    sense_locate,
    step_target,
    visible,
)
from .planning import (
    LOOKAHEAD_STEPS,
    STEP_DT,
    CandidateTrajectory,
    UtilityWeights,
    extract_frontiers,
    gen_search_candidates,
    gen_track_candidates,
    is_frontier_cell,
    j_explore,
    j_exploit,
    select_best,
    _path_rollout,
)
from .prediction import INPUT_LEN, PredictorWeights, cv_predict, predict_global
from .scenario import ScenarioConfig
from .world import (
    GridMap,
    NoPathError,
    Pose,
    VisibilityModel,
    is_free,
    load_map,
    plan_path,
)

DT = 0.2
PLAN_EVERY = 5            # ticks between planning/auction phases
LOST_TIMEOUT = 5.0        # s without a measurement before a tracker resumes search
FP_GATE = 2.0             # m gate for confirming/updating phantom tracks
FP_DROP_MISSES = 3        # consecutive in-FoV non-confirmations before dropping
TRACK_INIT_SCALE = 4.0    # initial covariance = scale * first measurement noise
MAX_OWN_FRONTIERS = 8     # frontier goals considered in the fallback path
MIN_TRAVEL_TIME = LOOKAHEAD_STEPS * STEP_DT


from dataclasses import dataclass


@dataclass
class RunMetrics:
    mission_time: float
    tracked_ratio: float
    mean_tracking_time: float
    mean_traveled: float
    clear_times: dict[int, float]


class _AgentRuntime:
    def __init__(self, state: AgentState, grid: GridMap, decay_rate: float):
        self.state = state
        self.belief = OccupancyBelief(grid, owner=state.id, decay_rate=decay_rate)
        self.tracks: dict[int, TrackEstimate] = {}
        self.history: dict[int, deque] = {}
        self.last_meas: dict[int, float] = {}
        self.first_detect: dict[int, float] = {}
        self.pending_fp: list[Pose] = []
        self.phantom_seq = 0
        self.fp_misses: dict[int, int] = {}
        self.current: CandidateTrajectory | None = None
        self.traj_step = 0
        self.shared_p: np.ndarray | None = None   # last fused belief broadcast
        self.reports: list[ReportEstimate] = []   # last broadcast report set
        self.own_goal: Pose | None = None         # fallback frontier commitment

    def scoring_belief(self, grid: GridMap) -> SharedOccupancyBelief:
        p = self.shared_p if self.shared_p is not None else self.belief.p
        return SharedOccupancyBelief(grid, p, {self.state.id: 1.0})


class Episode:
    """One seeded run of a scenario; build, then call run() exactly once."""

    def __init__(self, cfg: ScenarioConfig, predictor: PredictorWeights | None = None):
        cfg.validate()
        self.cfg = cfg
        self.grid = load_map(cfg.map_path)
        self.predictor = predictor
        if cfg.policy == "swarm" and self.grid.obstacle_mask.any():
            raise ConfigError("swarm policy requires an obstacle-free map")

        ss = np.random.SeedSequence(cfg.seed)
        streams = ss.spawn(4 + len(cfg.targets) + len(cfg.agents) + len(cfg.reporters))
        self.rng_place = np.random.default_rng(streams[0])
        self.rng_hetero = np.random.default_rng(streams[1])
        self.rng_bus = np.random.default_rng(streams[2])
        self.rng_policy = np.random.default_rng(streams[3])
        base = 4
        self.rng_targets = [np.random.default_rng(s)
                            for s in streams[base:base + len(cfg.targets)]]
        base += len(cfg.targets)
        self.rng_agents = [np.random.default_rng(s)
                           for s in streams[base:base + len(cfg.agents)]]
        base += len(cfg.agents)
        self.rng_reporters = [np.random.default_rng(s)
                              for s in streams[base:]]

        self._build_entities()
        self.weights = UtilityWeights(cfg.w_search, cfg.w_track, cfg.d_thre)
        self.q = DEFAULTS.target_speed ** 2  # process noise from the speed bound
        self.bus = MessageBus(p_cf=cfg.p_cf, p_ef=cfg.p_ef)
        self.hq = HQState(hold_time=cfg.hold_time)
        self.use_hq = cfg.policy in ("hybrid", "central-kf")
        self.use_reports = (cfg.policy == "hybrid" and cfg.toggles.tr
                            and bool(self.reporters))
        self.decay_on = cfg.toggles.tv and cfg.policy != "central-kf"
        self.use_lstm = (cfg.policy == "hybrid" and cfg.toggles.lstm
                         and predictor is not None)
        self.explore_only_search = cfg.policy == "central-kf"

        self.trace: list[dict] = []
        self._seq = 0
        self.detected_ever: set[int] = set()
        self.clear_times: dict[int, float] = {}
        self.first_detect_global: dict[int, float] = {}
        self._vis_cache: dict[float, VisibilityModel] = {}
        self.terminals: dict[int, Pose] = {}
        if cfg.policy == "exhaustive":
            self._build_sweeps()

    # -- construction ------------------------------------------------------

    def _build_entities(self) -> None:
        cfg, grid = self.cfg, self.grid
        taken: list[Pose] = []
        spacing = 2.0 * grid.resolution

        def place(start):
            if start is not None:
                p = Pose(start[0], start[1])
                taken.append(p)
                return p
            free = np.flatnonzero(grid.free_mask.ravel())
            for _ in range(10_000):
                idx = int(free[self.rng_place.integers(len(free))])
                i, j = divmod(idx, grid.width_cells)
                p = grid.center_of(i, j)
                if all(p.distance_to(q) >= spacing for q in taken):
                    taken.append(p)
                    return p
            raise ConfigError("could not place entities with required spacing")

        hetero = (heterogeneous_sample(self.rng_hetero, len(cfg.agents))
                  if cfg.heterogeneous else None)
        self.agents: list[_AgentRuntime] = []
        for k, spec in enumerate(cfg.agents):
            params = hetero[k] if hetero else {
                "range": spec.range, "alpha": spec.alpha, "beta": spec.beta,
                "sigma_near": spec.sigma_near, "sigma_far": spec.sigma_far,
            }
            if cfg.p_fp > 0.0:
                params["beta"] = cfg.p_fp
            sensor = SensorModel(**params)
            state = AgentState(k, place(spec.start), spec.max_speed, sensor)
            self.agents.append(_AgentRuntime(state, grid, cfg.decay_rate))

        self.targets: list[TargetState] = []
        for k, spec in enumerate(cfg.targets):
            if spec.motion == "trace":
                import json
                with open(spec.trace_file, "r", encoding="utf-8") as f:
                    samples = [(s["t"], s["x"], s["y"]) for s in json.load(f)]
                motion = TracePlayback(samples, loop=spec.loop_trace)
                start = spec.start or (samples[0][1], samples[0][2])
                pose = Pose(start[0], start[1])
                taken.append(pose)
            else:
                motion = RandomWaypoint()
                pose = place(spec.start)
            self.targets.append(TargetState(k, pose, spec.max_speed, motion))

        self.reporters = [
            Reporter(100 + k, r.sigma_report, r.report_period,
                     set(r.observed_targets))
            for k, r in enumerate(cfg.reporters)
        ]

    def _build_sweeps(self) -> None:
        labels = voronoi_partition(self.grid, [a.state.pose for a in self.agents])
        self.sweeps: list[list[Pose]] = []
        self.sweep_idx: list[int] = []
        for k, ar in enumerate(self.agents):
            region = labels == k
            spacing = max(1, int(ar.state.sensor.range / self.grid.resolution))
            if region.any():
                path = boustrophedon_path(region, self.grid, spacing)
                self.sweeps.append(path.waypoints)
            else:
                self.sweeps.append([ar.state.pose])
            self.sweep_idx.append(0)

    # -- bookkeeping ---------------------------------------------------------

    def _vis(self, sensor: SensorModel) -> VisibilityModel:
        return self._vis_for_range(sensor.range)

    def _vis_for_range(self, range_m: float) -> VisibilityModel:
        key = round(range_m, 9)
        if key not in self._vis_cache:
            self._vis_cache[key] = VisibilityModel(self.grid, range_m)
        return self._vis_cache[key]

    def _log(self, t: float, kind: str, **payload) -> None:
        self._seq += 1
        self.trace.append({"t": round(t, 6), "seq": self._seq, "kind": kind,
                           **payload})

    def _log_poses(self, t: float) -> None:
        for tg in self.targets:
            self._log(t, "pose", entity="target", id=tg.id,
                      x=tg.pose.x, y=tg.pose.y, cleared=tg.cleared)
        for ar in self.agents:
            s = ar.state
            self._log(t, "pose", entity="agent", id=s.id, x=s.pose.x,
                      y=s.pose.y, mode=s.mode, traveled=s.traveled)

    # -- sensing and filtering -------------------------------------------------

    def _sense_agent(self, ar: _AgentRuntime, t: float, tick: int) -> None:
        s = ar.state
        measurements: list[Measurement] = []
        new_detection = False
        for tid in sorted(ar.tracks):
            tr = ar.tracks[tid]
            if not tr.cleared:
                ar.tracks[tid] = kf_predict(tr, DT, self.q)
        sentinels: list[Measurement] = []
        for tg in self.targets:
            if tg.cleared:
                continue
            det = sense_detect(s.sensor, s.pose, tg, self.grid, self.rng_agents[s.id])
            if not det:
                continue
            if visible(s.sensor, s.pose, tg.pose, self.grid):
                m = sense_locate(s.sensor, s.pose, tg, self.rng_agents[s.id],
                                 time=t, source=s.id)
                measurements.append(m)
                self._log(t, "detection", agent=s.id, target=tg.id)
                self._log(t, "measurement", agent=s.id, target=tg.id,
                          x=m.position.x, y=m.position.y,
                          sigma=float(np.sqrt(m.covariance[0, 0])))
            else:
                fp = false_positive_measurement(s.sensor, s.pose, self.grid,
                                                self.rng_agents[s.id], time=t,
                                                source=s.id)
                if fp is not None:
                    sentinels.append(fp)
                    self._log(t, "measurement", agent=s.id,
                              target=FALSE_POSITIVE_ID, x=fp.position.x,
                              y=fp.position.y,
                              sigma=float(np.sqrt(fp.covariance[0, 0])))
        observe_cells(ar.belief, s.pose, s.sensor, measurements + sentinels,
                      self.grid, t, self._vis(s.sensor))
        for m in measurements:
            tid = m.target_id
            if tid not in ar.tracks:
                ar.tracks[tid] = TrackEstimate(
                    tid, np.array([m.position.x, m.position.y]),
                    m.covariance * TRACK_INIT_SCALE, last_update=t)
                ar.history[tid] = deque(maxlen=INPUT_LEN)
                ar.first_detect.setdefault(tid, t)
                if tid not in self.first_detect_global:
                    self.first_detect_global[tid] = t
                self.detected_ever.add(tid)
                new_detection = True
            else:
                ar.tracks[tid] = kf_update(ar.tracks[tid], m)
            ar.tracks[tid].monitoring_time += DT
            ar.last_meas[tid] = t
        self._update_phantoms(ar, sentinels, t)
        for tid in sorted(ar.tracks):
            tr = ar.tracks[tid]
            if not tr.cleared:
                ar.history.setdefault(tid, deque(maxlen=INPUT_LEN)).append(
                    tr.mean.copy())
        if new_detection and s.mode == SEARCH:
            self._switch_to_track(ar, t)

    def _switch_to_track(self, ar: _AgentRuntime, t: float) -> None:
        """Immediate reaction to a fresh detection: pick the own target with
        the lowest covariance trace, switch mode, and notify HQ."""
        s = ar.state
        live = [(float(np.trace(tr.covariance)), tid)
                for tid, tr in sorted(ar.tracks.items())
                if not tr.cleared and tid >= 0
                and t - ar.last_meas.get(tid, -1e9) <= LOST_TIMEOUT]
        if not live:
            return
        live.sort()
        s.mode = TRACK
        s.assigned_target = live[0][1]
        ar.own_goal = None
        self._log(t, "mode-switch", agent=s.id, mode=TRACK,
                  target=s.assigned_target)
        if self.use_hq:
            tr = ar.tracks[s.assigned_target]
            msg = Message(CH_AGENT, s.id, -1, "detect", {
                "target": s.assigned_target,
                "mean": tr.mean.tolist(),
                "cov": tr.covariance.tolist(),
                "distance": s.pose.distance_to(Pose(*tr.mean)),
                "monitoring": tr.monitoring_time,
            }, 0)
            delivered = self.bus.send(msg, self.rng_bus)
            self._log(t, "message", channel=CH_AGENT, msg="detect",
                      dropped=not delivered)

    def _update_phantoms(self, ar: _AgentRuntime, sentinels: list[Measurement],
                         t: float) -> None:
        """Spurious detections confirm into phantom tracks only when two
        consecutive ticks agree on a location; phantoms die after three
        consecutive in-view misses."""
        s = ar.state
        used = [False] * len(sentinels)
        for tid in sorted(tid for tid in ar.tracks if tid < FALSE_POSITIVE_ID):
            tr = ar.tracks[tid]
            hit = None
            for k, m in enumerate(sentinels):
                if used[k]:
                    continue
                if m.position.distance_to(Pose(*tr.mean)) <= FP_GATE:
                    hit = k
                    break
            if hit is not None:
                used[hit] = True
                ar.tracks[tid] = kf_update(tr, sentinels[hit])
                ar.last_meas[tid] = t
                ar.fp_misses[tid] = 0
            elif visible(s.sensor, s.pose, Pose(*tr.mean), self.grid):
                ar.fp_misses[tid] = ar.fp_misses.get(tid, 0) + 1
                if ar.fp_misses[tid] >= FP_DROP_MISSES:
                    del ar.tracks[tid]
                    ar.fp_misses.pop(tid, None)
                    ar.history.pop(tid, None)
                    if s.assigned_target == tid:
                        s.assigned_target = None
                        s.mode = SEARCH
        confirmed: list[Pose] = []
        for k, m in enumerate(sentinels):
            if used[k]:
                continue
            if any(m.position.distance_to(p) <= FP_GATE for p in ar.pending_fp):
                ar.phantom_seq += 1
                tid = FALSE_POSITIVE_ID - 1 - (s.id * 1000 + ar.phantom_seq)
                ar.tracks[tid] = TrackEstimate(
                    tid, np.array([m.position.x, m.position.y]),
                    m.covariance * TRACK_INIT_SCALE, last_update=t)
                ar.history[tid] = deque(maxlen=INPUT_LEN)
                ar.last_meas[tid] = t
            else:
                confirmed.append(m.position)
        ar.pending_fp = confirmed

    # -- reports and message ingest ---------------------------------------------

    def _emit_reports(self, t: float, tick: int) -> None:
        if not self.use_reports:
            return
        for k, rep in enumerate(self.reporters):
            if tick % max(1, int(round(rep.report_period / DT))) != 0:
                continue
            for tid in sorted(rep.observed_targets):
                tg = self.targets[tid]
                if tg.cleared:
                    continue
                m = emit_report(rep, tg, t, self.rng_reporters[k])
                msg = Message(CH_REPORT, rep.id, -1, "report", m, tick)
                delivered = self.bus.send(msg, self.rng_bus)
                self._log(t, "report", reporter=rep.id, target=tid,
                          x=m.position.x, y=m.position.y, dropped=not delivered)

    def _send_status(self, t: float, tick: int) -> None:
        """Once per planning cycle each agent broadcasts its belief and
        track summaries to HQ; the whole bundle survives or drops as one."""
        for ar in self.agents:
            s = ar.state
            tracks = []
            for tid in sorted(ar.tracks):
                tr = ar.tracks[tid]
                if tr.cleared:
                    continue
                tracks.append({
                    "target": tid, "mean": tr.mean.tolist(),
                    "cov": tr.covariance.tolist(),
                    "distance": s.pose.distance_to(Pose(*tr.mean)),
                    "monitoring": tr.monitoring_time,
                    "fresh": t - ar.last_meas.get(tid, -1e9) <= DT * PLAN_EVERY,
                })
            payload = {
                "belief": ar.belief.copy(),
                "trace": information_trace(
                    [tr for _, tr in sorted(ar.tracks.items())], s.sensor),
                "tracks": tracks,
            }
            msg = Message(CH_AGENT, s.id, -1, "status", payload, tick)
            delivered = self.bus.send(msg, self.rng_bus)
            self._log(t, "message", channel=CH_AGENT, msg="status",
                      dropped=not delivered)

    def _hq_ingest(self, t: float, tick: int) -> None:
        for msg in self.bus.collect(tick):
            if msg.kind == "status":
                self.hq.agent_beliefs[msg.sender] = (
                    msg.payload["belief"], msg.payload["trace"])
                for tr in msg.payload["tracks"]:
                    self._hq_track(msg.sender, tr, t, tick,
                                   fresh=tr.get("fresh", True))
            elif msg.kind == "detect":
                self._hq_track(msg.sender, dict(msg.payload), t, tick, fresh=True)
            elif msg.kind == "report":
                m: Measurement = msg.payload
                est = ReportEstimate(m.target_id,
                                     np.array([m.position.x, m.position.y]),
                                     m.covariance, m.source, m.time)
                self.hq.reports[(m.source, m.target_id)] = est

    def _hq_track(self, agent_id: int, tr: dict, t: float, tick: int,
                  fresh: bool) -> None:
        tid = tr["target"]
        est = TrackEstimate(tid, np.array(tr["mean"], dtype=float),
                            np.array(tr["cov"], dtype=float), last_update=t,
                            monitoring_time=tr["monitoring"])
        rec = self.hq.registry.get(tid)
        if rec is None:
            rec = TargetRecord(tid, est, first_detected=t)
            self.hq.registry[tid] = rec
        elif float(np.trace(est.covariance)) < float(np.trace(rec.track.covariance)):
            rec.track = est
        if fresh:
            rec.detectors[agent_id] = DetectorReport(
                agent_id, float(np.trace(est.covariance)), tr["distance"],
                tr["monitoring"], tick)
        elif agent_id in rec.detectors:
            del rec.detectors[agent_id]

    # -- scoring helpers -----------------------------------------------------

    def _prediction_for(self, ar: _AgentRuntime, tid: int) -> np.ndarray | None:
        hist = ar.history.get(tid)
        if hist is None or len(hist) < 2:
            return None
        arr = np.array(hist)
        if self.use_lstm and len(hist) == INPUT_LEN:
            return predict_global(self.predictor, arr)
        return cv_predict(arr, LOOKAHEAD_STEPS, DT)

    def _agent_reports(self, ar: _AgentRuntime) -> list[ReportEstimate]:
        return ar.reports if self.use_reports else []

    def _score_candidates(self, ar: _AgentRuntime, cands, mode: str,
                          tid: int | None = None) -> None:
        s = ar.state
        bel = ar.scoring_belief(self.grid)
        vis = self._vis(s.sensor)
        reports = self._agent_reports(ar)
        if mode == SEARCH:
            tracks: list[TrackEstimate] = []
            preds = None
        else:
            tracks = [ar.tracks[tid]] if tid in ar.tracks else []
            preds = None
            if tid in ar.tracks:
                p = self._prediction_for(ar, tid)
                if p is not None:
                    preds = {tid: p}
        for c in cands:
            c.raw_explore = j_explore(bel, c, s.sensor, self.grid, vis)
            if self.explore_only_search and mode == SEARCH:
                c.raw_exploit = 0.0
            else:
                c.raw_exploit = j_exploit(tracks, reports, c, s.sensor,
                                          self.grid, self.q, preds)

    def _teammate_terminals(self, agent_id: int) -> list[Pose]:
        return [p for aid, p in sorted(self.terminals.items()) if aid != agent_id]

    def _frontier_gains(self, centroid: Pose, p_grid: np.ndarray,
                        reports: list[ReportEstimate]) -> tuple[float, float]:
        """Raw task gains of a frontier: entropy mass a nominal sensor would
        see from the centroid, and a report-driven pull whose virtual noise
        keeps growing past sensor range so distant leads still attract."""
        d = DEFAULTS
        cell = self.grid.cell_of(centroid.x, centroid.y)
        if cell is None:
            return 0.0, 0.0
        vis = self._vis_for_range(d.sensor_range)
        idx = vis.visible_from(cell)
        explore = float(cell_entropy(p_grid.ravel()[idx]).sum()) if idx.size else 0.0
        exploit = 0.0
        for rep in reports:
            dist = math.hypot(centroid.x - rep.mean[0], centroid.y - rep.mean[1])
            sigma = d.sigma_near + (d.sigma_far - d.sigma_near) * (
                dist / d.sensor_range)
            prior = rep.covariance + self.q * 1.0 * np.eye(2)
            r = np.eye(2) * sigma * sigma
            k = prior @ np.linalg.inv(prior + r)
            post = (np.eye(2) - k) @ prior
            try:
                exploit += max(0.0, gaussian_entropy(prior) - gaussian_entropy(post))
            except ValueError:
                pass
        return explore, exploit

    def _frontier_values(self, frontiers, p_grid: np.ndarray,
                         reports: list[ReportEstimate]) -> dict[int, float]:
        """Blended task values, with each gain normalized over the frontier
        set first so the report pull cannot be swamped by raw entropy scale."""
        gains = {fr.id: self._frontier_gains(fr.centroid, p_grid, reports)
                 for fr in frontiers}
        max_e = max((g[0] for g in gains.values()), default=0.0)
        max_x = max((g[1] for g in gains.values()), default=0.0)
        w = self.weights.w_search
        out = {}
        for fid, (e, x) in gains.items():
            ve = e / max_e if max_e > 0 else 0.0
            vx = x / max_x if max_x > 0 else 0.0
            out[fid] = w * ve + (1.0 - w) * vx
        return out

    def _task_frontiers(self, frontiers):
        """Split oversized frontier clusters into task-sized segments.

        One connected boundary on an open map collapses to a single
        centroid, which serializes the whole team onto one goal; segments
        of roughly a sensor diameter give the auction enough distinct
        tasks. Members are ordered by angle around the cluster mean so the
        split is deterministic and follows the boundary.
        """
        cap = max(6, int(2.0 * DEFAULTS.sensor_range / self.grid.resolution))
        out = []
        nid = 0
        for fr in frontiers:
            if fr.cluster_size <= cap:
                out.append(type(fr)(nid, fr.centroid, fr.member_cells))
                nid += 1
                continue
            cells = fr.member_cells
            ci = sum(c[0] for c in cells) / len(cells)
            cj = sum(c[1] for c in cells) / len(cells)
            ordered = sorted(cells, key=lambda c: (math.atan2(c[0] - ci,
                                                              c[1] - cj), c))
            for lo in range(0, len(ordered), cap):
                seg = ordered[lo:lo + cap]
                si = sum(c[0] for c in seg) / len(seg)
                sj = sum(c[1] for c in seg) / len(seg)
                snap = min(seg, key=lambda c: (c[0] - si) ** 2 + (c[1] - sj) ** 2)
                out.append(type(fr)(nid, self.grid.center_of(*snap), seg))
                nid += 1
        return out

    def _frontierish(self, bel: SharedOccupancyBelief, goal: Pose) -> bool:
        """Is the goal still (near) a frontier in this belief?"""
        cell = self.grid.cell_of(goal.x, goal.y)
        if cell is None:
            return False
        i, j = cell
        band = self.cfg.unknown_band
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                if is_frontier_cell(bel, self.grid, i + di, j + dj, band):
                    return True
        return False

    def _rollout_to(self, ar: _AgentRuntime, goal: Pose) -> CandidateTrajectory | None:
        poses = _path_rollout(ar.state, goal, self.grid)
        if poses is None:
            return None
        return CandidateTrajectory(poses, poses[-1], task=("goal", (goal.x, goal.y)))

    def _search_option(self, ar: _AgentRuntime, centroid: Pose
                       ) -> tuple[float, float] | None:
        """Expected explore gain swept along the whole path to a frontier
        (decimated to every third cell) and the travel time; None when the
        centroid is unreachable."""
        s = ar.state
        try:
            path = plan_path(self.grid, s.pose, centroid)
        except NoPathError:
            return None
        tt = max(path.length / s.max_speed, MIN_TRAVEL_TIME)
        stride = 3.0 * self.grid.resolution
        pts: list[Pose] = [s.pose]
        carry = 0.0
        cur = s.pose
        for wp in path.waypoints[1:] + [centroid]:
            seg = cur.distance_to(wp)
            while carry + seg >= stride:
                f = (stride - carry) / seg
                cur = Pose(cur.x + (wp.x - cur.x) * f, cur.y + (wp.y - cur.y) * f)
                seg = cur.distance_to(wp)
                carry = 0.0
                pts.append(cur)
                if len(pts) >= 60:
                    break
            if len(pts) >= 60:
                break
            carry += seg
            cur = wp
        pts.append(centroid)
        tau = CandidateTrajectory(pts, centroid)
        bel = ar.scoring_belief(self.grid)
        gain = j_explore(bel, tau, s.sensor, self.grid, self._vis(s.sensor))
        return gain, tt

    # -- HQ planning (hybrid / central-kf) ----------------------------------------

    def _plan_hq(self, t: float, tick: int) -> dict[int, Assignment]:
        hq = self.hq
        for aid in sorted(hq.agent_beliefs):
            bel, _ = hq.agent_beliefs[aid]
            if self.decay_on:
                apply_time_decay(bel, t, len(self.detected_ever),
                                 len(self.targets))
        for tid, rec in sorted(hq.registry.items()):
            if tid in self.clear_times:
                rec.cleared = True
            stale = [aid for aid, drep in sorted(rec.detectors.items())
                     if tick - drep.tick > PLAN_EVERY]
            for aid in stale:
                del rec.detectors[aid]

        fused = hq.fused_belief()

        # release finished commitments before this round's auctions
        for aid in sorted(list(hq.search_assignments)):
            a = hq.search_assignments[aid]
            goal = Pose(*a.task[1])
            ar = self.agents[aid]
            reached = ar.state.pose.distance_to(goal) <= self.grid.resolution
            gone = fused is None or not self._frontierish(fused, goal)
            if reached or gone or ar.state.mode == TRACK:
                hq.release(aid)
        for aid in sorted(list(hq.tracking_assignments)):
            a = hq.tracking_assignments[aid]
            tid = a.task[1]
            if tid in self.clear_times or self.agents[aid].state.mode != TRACK:
                hq.active.discard(aid)

        nominal = DEFAULTS

        def sigma_at(dist: float) -> float:
            frac = min(max(dist / nominal.sensor_range, 0.0), 1.0)
            return nominal.sigma_near + (nominal.sigma_far - nominal.sigma_near) * frac

        bid_cache: dict[tuple, Bid | None] = {}

        def track_bid(aid: int, tid: int) -> Bid | None:
            key = ("t", aid, tid)
            if key not in bid_cache:
                bid_cache[key] = self._make_track_bid(aid, tid)
            return bid_cache[key]

        assignments: dict[int, Assignment] = {}
        for a in hq_assign_tracking(hq, t, track_bid, sigma_at, self.q):
            assignments[a.agent_id] = a
            self._log(t, "assignment", agent=a.agent_id, task=list(a.task))

        if fused is not None:
            frontiers = self._task_frontiers(
                extract_frontiers(fused, self.grid, self.cfg.unknown_band))
            if frontiers:
                reports = hq.live_reports() if not self.explore_only_search else []
                values = self._frontier_values(frontiers, fused.p, reports)

                def frontier_utility(fr) -> float:
                    return values[fr.id]

                def search_bid(aid: int, fr) -> Bid | None:
                    key = ("s", aid, fr.id)
                    if key not in bid_cache:
                        bid_cache[key] = self._make_search_bid(
                            aid, fr, values[fr.id])
                    return bid_cache[key]

                blocked = [Pose(*hq.search_assignments[aid].task[1])
                           for aid in sorted(hq.search_assignments)]
                for a in hq_assign_search(
                        hq, frontiers, [ar.state.id for ar in self.agents],
                        t, frontier_utility, search_bid, blocked,
                        self.weights.d_thre):
                    assignments[a.agent_id] = a
                    self._log(t, "assignment", agent=a.agent_id,
                              task=[a.task[0], list(a.task[1])])
            self._log(t, "belief-snapshot", owner="hq",
                      cells=[[i, round(p, 6)] for i, p in
                             _sparse_cells(fused.p)])
        return assignments

    def _make_track_bid(self, aid: int, tid: int) -> Bid | None:
        ar = self.agents[aid]
        rec = self.hq.registry.get(tid)
        if rec is None or rec.cleared:
            return None
        if tid not in ar.tracks:
            # agent adopts HQ's view before bidding on an unseen target
            ar.tracks[tid] = TrackEstimate(tid, rec.track.mean.copy(),
                                           rec.track.covariance.copy(),
                                           last_update=rec.track.last_update)
            ar.history.setdefault(tid, deque(maxlen=INPUT_LEN))
        cands = gen_track_candidates(ar.state, None, self.grid, target_id=tid)
        self._score_candidates(ar, cands, TRACK, tid)
        best = select_best(cands, TRACK, self.weights,
                           self._teammate_terminals(aid))
        w = self.weights.w_track
        utility = w * best.raw_explore + (1.0 - w) * best.raw_exploit
        return Bid(aid, ("target", tid), best, utility)

    def _make_search_bid(self, aid: int, fr, value: float) -> Bid | None:
        """Search bids are information rate: expected gain swept over the
        whole journey (scaled by the task's ranked value) per travel second,
        so a capable agent with a fresh corridor wins and commits."""
        ar = self.agents[aid]
        opt = self._search_option(ar, fr.centroid)
        if opt is None:
            return None
        gain, tt = opt
        return Bid(aid, ("frontier", fr.id), None, (gain * (0.5 + value)) / tt)

    # -- per-agent decisions -------------------------------------------------------

    def _decide_agents(self, t: float) -> None:
        hq = self.hq
        for ar in self.agents:
            s = ar.state
            self._release_if_done(ar, t)
            assigned = False
            n_frontiers = -1
            if self.use_hq:
                a = hq.tracking_assignments.get(s.id)
                if (a is not None and s.id in hq.active
                        and a.task[1] not in self.clear_times):
                    tid = a.task[1]
                    if s.mode != TRACK or s.assigned_target != tid:
                        self._log(t, "mode-switch", agent=s.id, mode=TRACK,
                                  target=tid)
                        if a.issued_at == t:
                            ar.last_meas[tid] = t
                    s.mode, s.assigned_target = TRACK, tid
                    ar.own_goal = None
                    self._decide_track(ar, t)
                    assigned = True
                elif s.id in hq.search_assignments and s.mode == SEARCH:
                    goal = Pose(*hq.search_assignments[s.id].task[1])
                    traj = self._rollout_to(ar, goal)
                    if traj is None:
                        hq.release(s.id)
                    else:
                        ar.current, ar.traj_step = traj, 0
                        ar.own_goal = None
                        assigned = True
            if not assigned:
                n_frontiers = self._independent_decision(ar, t)
            self.terminals[s.id] = (ar.current.terminal if ar.current
                                    else s.pose)
            c = ar.current
            self._log(t, "decision", agent=s.id, mode=s.mode,
                      n_candidates=getattr(c, "n_candidates", 1) if c else 0,
                      n_frontiers=n_frontiers,
                      chosen_terminal=[c.terminal.x, c.terminal.y] if c else
                      [s.pose.x, s.pose.y],
                      j_explore=c.j_explore if c else 0.0,
                      j_exploit=c.j_exploit if c else 0.0,
                      score=c.score if c else 0.0,
                      assigned=assigned)

    def _release_if_done(self, ar: _AgentRuntime, t: float) -> None:
        s = ar.state
        if s.mode != TRACK or s.assigned_target is None:
            if s.assigned_target is None and s.mode == TRACK:
                s.mode = SEARCH
            return
        tid = s.assigned_target
        tr = ar.tracks.get(tid)
        lost = tr is None or (t - ar.last_meas.get(tid, -1e9) > LOST_TIMEOUT)
        cleared = tid in self.clear_times or (tr is not None and tr.cleared)
        if cleared or lost:
            s.mode, s.assigned_target = SEARCH, None
            self._log(t, "mode-switch", agent=s.id, mode=SEARCH)

    def _independent_decision(self, ar: _AgentRuntime, t: float) -> int:
        """Fallback decision when no HQ task applies; returns the number of
        frontier options seen (for liveness analysis), -1 when not a search
        decision."""
        policy = self.cfg.policy
        if policy in ("hybrid", "central-kf", "independent"):
            return self._decide_information(ar, t)
        if policy == "random":
            return self._decide_random(ar, t)
        if policy == "exhaustive":
            return self._decide_exhaustive(ar, t)
        if policy == "swarm":
            return -1  # velocities set for the whole swarm in _plan_swarm
        raise ConfigError(f"unknown policy {policy}")

    def _decide_track(self, ar: _AgentRuntime, t: float) -> None:
        s = ar.state
        cands = gen_track_candidates(s, None, self.grid,
                                     target_id=s.assigned_target)
        self._score_candidates(ar, cands, TRACK, s.assigned_target)
        best = select_best(cands, TRACK, self.weights,
                           self._teammate_terminals(s.id))
        best.n_candidates = len(cands)
        ar.current, ar.traj_step = best, 0

    def _decide_information(self, ar: _AgentRuntime, t: float) -> int:
        """Alg.-2 style independent step: keep or pick a frontier goal by
        value rate, with Eq.-5 candidate selection in track mode."""
        s = ar.state
        if s.mode == TRACK and s.assigned_target is not None:
            self._decide_track(ar, t)
            return -1
        bel = ar.scoring_belief(self.grid)
        goal = ar.own_goal
        if goal is not None:
            if (s.pose.distance_to(goal) <= self.grid.resolution
                    or not self._frontierish(bel, goal)):
                goal = None
        frontiers = self._own_frontiers(ar)
        if goal is None:
            reports = self._agent_reports(ar) if not self.explore_only_search else []
            # explore = gain swept along the whole journey; exploit = the
            # task's report pull; blend normalized over the option set
            options = {}
            for fr in frontiers:
                opt = self._search_option(ar, fr.centroid)
                if opt is None:
                    continue
                _, x_gain = self._frontier_gains(fr.centroid, bel.p, reports)
                options[fr.id] = (fr.centroid, opt[0], x_gain, opt[1])
            max_e = max((o[1] for o in options.values()), default=0.0)
            max_x = max((o[2] for o in options.values()), default=0.0)
            # the spread constraint needs teammate goals, which only agents
            # on the shared channel know about
            blocked = (self._teammate_terminals(s.id)
                       if self.cfg.policy != "independent" else [])
            w = self.weights.w_search
            for relax in (False, True):
                best_rate = 0.0
                for fid in sorted(options):
                    centroid, e_gain, x_gain, tt = options[fid]
                    if not relax and any(centroid.distance_to(p) < self.weights.d_thre
                                         for p in blocked):
                        continue
                    ve = e_gain / max_e if max_e > 0 else 0.0
                    vx = x_gain / max_x if max_x > 0 else 0.0
                    rate = (w * ve + (1.0 - w) * vx) / tt
                    if rate > best_rate:
                        best_rate, goal = rate, centroid
                if goal is not None:
                    break
            ar.own_goal = goal
        traj = self._rollout_to(ar, goal) if goal is not None else None
        if traj is None:
            ar.own_goal = None
            traj = CandidateTrajectory([s.pose] * LOOKAHEAD_STEPS, s.pose)
        ar.current, ar.traj_step = traj, 0
        return len(frontiers)

    def _own_frontiers(self, ar: _AgentRuntime):
        bel = ar.scoring_belief(self.grid)
        frontiers = self._task_frontiers(
            extract_frontiers(bel, self.grid, self.cfg.unknown_band))
        if len(frontiers) > MAX_OWN_FRONTIERS:
            pose = ar.state.pose
            frontiers = sorted(
                frontiers, key=lambda f: (pose.distance_to(f.centroid), f.id)
            )[:MAX_OWN_FRONTIERS]
        return frontiers

    def _decide_random(self, ar: _AgentRuntime, t: float) -> int:
        s = ar.state
        last_known = None
        if s.mode == TRACK and s.assigned_target is not None:
            tr = ar.tracks.get(s.assigned_target)
            if tr is not None:
                last_known = Pose(float(tr.mean[0]), float(tr.mean[1]))
        # commit to the randomly chosen frontier until reached or stale
        if last_known is None and ar.own_goal is not None:
            bel = ar.scoring_belief(self.grid)
            if (s.pose.distance_to(ar.own_goal) <= self.grid.resolution
                    or not self._frontierish(bel, ar.own_goal)):
                ar.own_goal = None
            else:
                traj = self._rollout_to(ar, ar.own_goal)
                if traj is not None:
                    ar.current, ar.traj_step = traj, 0
                    return -1
                ar.own_goal = None
        frontiers = self._own_frontiers(ar)
        traj = random_walk_step(s.pose, s.max_speed, frontiers, last_known,
                                self.grid, self.rng_policy)
        if last_known is None:
            ar.own_goal = Pose(*traj.task[1]) if traj.task else None
        ar.current, ar.traj_step = traj, 0
        return len(frontiers)

    def _decide_exhaustive(self, ar: _AgentRuntime, t: float) -> int:
        s = ar.state
        if s.mode == TRACK and s.assigned_target is not None:
            pred = self._prediction_for(ar, s.assigned_target)
            if pred is not None:
                goal = Pose(float(pred[-1][0]), float(pred[-1][1]))
            else:
                tr = ar.tracks[s.assigned_target]
                goal = Pose(float(tr.mean[0]), float(tr.mean[1]))
            if not is_free(self.grid, goal):
                goal = s.pose
            traj = self._rollout_to(ar, goal)
            ar.current = traj if traj is not None else CandidateTrajectory(
                [s.pose] * LOOKAHEAD_STEPS, s.pose)
            ar.traj_step = 0
            return -1
        wps = self.sweeps[s.id]
        k = self.sweep_idx[s.id]
        for _ in range(len(wps) + 1):
            goal = wps[k % len(wps)]
            if s.pose.distance_to(goal) <= 0.5 * self.grid.resolution:
                k += 1
                continue
            traj = self._rollout_to(ar, goal)
            if traj is not None:
                self.sweep_idx[s.id] = k
                ar.current, ar.traj_step = traj, 0
                return -1
            k += 1
        self.sweep_idx[s.id] = k
        ar.current = CandidateTrajectory([s.pose] * LOOKAHEAD_STEPS, s.pose)
        ar.traj_step = 0
        return -1

    def _plan_swarm(self, t: float) -> None:
        seen: Pose | None = None
        freshest = -1e9
        for ar in self.agents:
            for tid in sorted(ar.tracks):
                if tid < 0 or ar.tracks[tid].cleared:
                    continue
                ts = ar.last_meas.get(tid, -1e9)
                if t - ts <= 1.0 and ts > freshest:
                    freshest = ts
                    tr = ar.tracks[tid]
                    seen = Pose(float(tr.mean[0]), float(tr.mean[1]))
        vels = swarm_step([a.state.pose for a in self.agents],
                          max(a.state.max_speed for a in self.agents),
                          self.weights.d_thre, seen, self.grid, t,
                          len(self.agents))
        for ar, v in zip(self.agents, vels):
            ar.current = swarm_trajectory(ar.state.pose, v, self.grid)
            ar.traj_step = 0
            c = ar.current
            self._log(t, "decision", agent=ar.state.id, mode=ar.state.mode,
                      n_candidates=1, n_frontiers=-1,
                      chosen_terminal=[c.terminal.x, c.terminal.y],
                      j_explore=0.0, j_exploit=0.0, score=0.0, assigned=False)

    # -- motion and clearing -----------------------------------------------------

    def _move_agents(self, t: float) -> None:
        for ar in self.agents:
            s = ar.state
            if ar.current is None or ar.traj_step >= len(ar.current.poses):
                continue
            nxt = ar.current.poses[ar.traj_step]
            ar.traj_step += 1
            gap = s.pose.distance_to(nxt)
            budget = s.max_speed * DT * (1.0 + 1e-9)
            if gap > budget:
                f = budget / gap
                nxt = Pose(s.pose.x + (nxt.x - s.pose.x) * f,
                           s.pose.y + (nxt.y - s.pose.y) * f)
                gap = budget
            s.traveled += gap
            s.pose = nxt

    def _check_clears(self, t: float) -> None:
        for tg in self.targets:
            if tg.cleared:
                continue
            for ar in self.agents:
                tr = ar.tracks.get(tg.id)
                if tr is not None and not tr.cleared and is_tracked(
                        tr, self.cfg.sigma_thre_trace):
                    tg.cleared = True
                    self.clear_times[tg.id] = t
                    self._log(t, "clear", target=tg.id,
                              trace=float(np.trace(tr.covariance)),
                              agent=ar.state.id)
                    break
            if tg.cleared:
                for ar in self.agents:
                    if tg.id in ar.tracks:
                        ar.tracks[tg.id].cleared = True
                rec = self.hq.registry.get(tg.id)
                if rec is not None:
                    rec.cleared = True

    # -- main loop ------------------------------------------------------------------

    def run(self) -> tuple[RunMetrics, list[dict]]:
        cfg = self.cfg
        self._log(0.0, "header", version=ENGINE_VERSION, seed=cfg.seed,
                  policy=cfg.policy, name=cfg.name,
                  n_agents=len(self.agents), n_targets=len(self.targets))
        self._log_poses(0.0)
        cap_ticks = (int(round(cfg.time_cap / DT)) if cfg.time_cap > 0
                     else 10_000_000)
        mission_time = cfg.time_cap if cfg.time_cap > 0 else 0.0
        for tick in range(1, cap_ticks + 1):
            t = tick * DT
            for tg in self.targets:
                step_target(tg, self.grid, DT, self.rng_targets[tg.id])
            for ar in self.agents:
                self._sense_agent(ar, t, tick)
            self._emit_reports(t, tick)
            if self.use_hq and tick % PLAN_EVERY == 0:
                self._send_status(t, tick)
                self._hq_ingest(t, tick)
            if self.decay_on:
                for ar in self.agents:
                    apply_time_decay(ar.belief, t, len(self.detected_ever),
                                     len(self.targets))
            if tick % PLAN_EVERY == 0:
                if cfg.policy == "swarm":
                    for ar in self.agents:
                        self._release_if_done(ar, t)
                    self._plan_swarm(t)
                else:
                    if self.use_hq:
                        self._plan_hq(t, tick)
                        self._broadcast(t)
                    self._decide_agents(t)
            self._move_agents(t)
            self._check_clears(t)
            self._log_poses(t)
            if len(self.clear_times) == len(self.targets):
                mission_time = t
                break
        metrics = self._metrics(mission_time)
        return metrics, self.trace

    def _broadcast(self, t: float) -> None:
        fused = self.hq.fused_belief()
        for ar in self.agents:
            if fused is not None:
                ar.shared_p = fused.p.copy()
            ar.reports = self.hq.live_reports()

    def _metrics(self, mission_time: float) -> RunMetrics:
        n = len(self.targets)
        cleared = len(self.clear_times)
        times = [self.clear_times[tid] - self.first_detect_global[tid]
                 for tid in sorted(self.clear_times)
                 if tid in self.first_detect_global]
        mean_tracking = float(np.mean(times)) if times else float("nan")
        mean_traveled = float(np.mean([a.state.traveled for a in self.agents]))
        return RunMetrics(
            mission_time=round(mission_time, 6),
            tracked_ratio=cleared / n,
            mean_tracking_time=mean_tracking,
            mean_traveled=mean_traveled,
            clear_times={k: round(v, 6) for k, v in sorted(self.clear_times.items())},
        )


def _sparse_cells(p: np.ndarray, eps: float = 0.01):
    flat = p.ravel()
    idx = np.flatnonzero(np.abs(flat - 0.5) > eps)
    return [(int(i), float(flat[i])) for i in idx]
