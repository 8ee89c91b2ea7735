"""HQ auctions, the agent-side independent fallback, and the message bus.

The HQ collects asynchronously delivered beliefs, track reports, and
third-party reports, then assigns tracking first (detected targets take
priority) and search second, both by greedy single-round auctions. Agents
that receive nothing fall back to their own frontiers, so the team stays
live under arbitrary communication loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .belief import (
    OccupancyBelief,
    ReportEstimate,
    SharedOccupancyBelief,
    TrackEstimate,
    fuse_occupancy,
    kf_predict,
)
from .planning import CandidateTrajectory

CH_AGENT = "agent"    # agent -> HQ, fails with p_cf
CH_REPORT = "report"  # reporter -> HQ, fails with p_ef
CH_HQ = "hq"          # HQ -> agent, reliable by default


@dataclass
class Message:
    channel: str
    sender: int
    receiver: int
    kind: str
    payload: object
    sent_tick: int = 0


class MessageBus:
    """Per-channel-class lossy queues with fixed latency in ticks.

    Messages on one channel arrive in send order; a dropped message is never
    delivered. Drop rolls use the caller-provided generator so episodes stay
    reproducible.
    """

    def __init__(self, p_cf: float = 0.0, p_ef: float = 0.0,
                 p_hq: float = 0.0, latency: int = 0):
        for p in (p_cf, p_ef, p_hq):
            if not 0.0 <= p <= 1.0:
                raise ValueError("failure probabilities must be in [0, 1]")
        self.p_cf = p_cf
        self.p_ef = p_ef
        self.p_hq = p_hq
        self.latency = int(latency)
        self._queue: list[tuple[int, int, Message]] = []
        self._seq = 0
        self.sent = 0
        self.dropped = 0

    def failure_prob(self, channel: str) -> float:
        return {CH_AGENT: self.p_cf, CH_REPORT: self.p_ef, CH_HQ: self.p_hq}[channel]

    def send(self, msg: Message, rng: np.random.Generator) -> bool:
        """Roll the channel's failure probability; enqueue when delivered."""
        self.sent += 1
        if rng.random() < self.failure_prob(msg.channel):
            self.dropped += 1
            return False
        self._seq += 1
        self._queue.append((msg.sent_tick + self.latency, self._seq, msg))
        return True

    def collect(self, tick: int) -> list[Message]:
        """All messages due at or before tick, in send order."""
        due = [(d, s, m) for d, s, m in self._queue if d <= tick]
        self._queue = [(d, s, m) for d, s, m in self._queue if d > tick]
        due.sort(key=lambda e: e[1])
        return [m for _, _, m in due]


def deliver(bus: MessageBus, msg: Message, rng: np.random.Generator) -> bool:
    return bus.send(msg, rng)


# -- HQ state ----------------------------------------------------------------

@dataclass
class Bid:
    agent_id: int
    task: object
    trajectory: CandidateTrajectory | None
    utility: float


@dataclass
class Assignment:
    agent_id: int
    task: object              # ("target", id) or ("frontier", id)
    trajectory: CandidateTrajectory | None
    issued_at: float


@dataclass
class DetectorReport:
    """Per (agent, target) summary inside the HQ registry."""
    agent_id: int
    trace: float
    distance: float
    monitoring_time: float
    tick: int


@dataclass
class TargetRecord:
    target_id: int
    track: TrackEstimate
    detectors: dict[int, DetectorReport] = field(default_factory=dict)
    first_detected: float = 0.0
    cleared: bool = False


class HQState:
    """Everything the headquarters knows from delivered messages only.

    ``active`` persists across planning cycles: an agent stays committed to
    its task until the engine observes completion (frontier reached or gone,
    target cleared or lost) and releases it.
    """

    def __init__(self, hold_time: float = 5.0):
        self.hold_time = hold_time
        self.agent_beliefs: dict[int, tuple[OccupancyBelief, float]] = {}
        self.registry: dict[int, TargetRecord] = {}
        self.reports: dict[tuple[int, int], ReportEstimate] = {}
        self.tracking_assignments: dict[int, Assignment] = {}
        self.search_assignments: dict[int, Assignment] = {}
        self.active: set[int] = set()
        self.bid_requests = 0

    def release(self, agent_id: int) -> None:
        self.active.discard(agent_id)
        self.search_assignments.pop(agent_id, None)

    def fused_belief(self) -> SharedOccupancyBelief | None:
        if not self.agent_beliefs:
            return None
        pairs = sorted(self.agent_beliefs.items())
        return fuse_occupancy([(b, tr) for _, (b, tr) in pairs])

    def live_reports(self) -> list[ReportEstimate]:
        """Most recent report per (reporter, target), uncleared targets only."""
        out = []
        for key in sorted(self.reports):
            r = self.reports[key]
            rec = self.registry.get(r.target_id)
            if rec is not None and rec.cleared:
                continue
            out.append(r)
        return out


def check_assign_available(hq: HQState, agent_id: int, t: float) -> bool:
    """Hysteresis: an agent keeps a fresh tracking assignment for hold_time."""
    cur = hq.tracking_assignments.get(agent_id)
    if cur is None:
        return True
    rec = hq.registry.get(cur.task[1])
    if rec is not None and rec.cleared:
        return True
    return t - cur.issued_at >= hq.hold_time


def expected_post_action_trace(rec: TargetRecord, sigma_at, q: float,
                               horizon: float = 1.0) -> float:
    """Priority key for tracking: covariance trace after predict + one
    simulated update at the nearest detector's current distance."""
    prior = rec.track.covariance + q * horizon * np.eye(2)
    if not rec.detectors:
        return float(np.trace(prior))
    d = min(r.distance for r in rec.detectors.values())
    sigma = sigma_at(d)
    r = np.eye(2) * sigma * sigma
    k = prior @ np.linalg.inv(prior + r)
    post = (np.eye(2) - k) @ prior
    return float(np.trace(post))


def hq_assign_tracking(hq: HQState, t: float, bid_fn, sigma_at, q: float = 0.04
                       ) -> list[Assignment]:
    """Greedy auction of detected, uncleared targets to detecting agents.

    Targets pop in ascending expected post-action trace (finish the easiest
    first); every agent that detected something and passes hysteresis bids;
    one win per agent per round. bid_fn(agent_id, target_id) returns a Bid
    or None.
    """
    detectors: set[int] = set()
    queue = []
    for tid in sorted(hq.registry):
        rec = hq.registry[tid]
        if rec.cleared or not rec.detectors:
            continue
        detectors.update(rec.detectors)
        queue.append((expected_post_action_trace(rec, sigma_at, q), tid))
    queue.sort()
    assignments = []
    won: set[int] = set()
    for _, tid in queue:
        best: Bid | None = None
        for aid in sorted(detectors):
            if aid in won or not check_assign_available(hq, aid, t):
                continue
            hq.bid_requests += 1
            bid = bid_fn(aid, tid)
            if bid is None:
                continue
            if best is None or bid.utility > best.utility:
                best = bid
        if best is None:
            continue
        a = Assignment(best.agent_id, ("target", tid), best.trajectory, t)
        hq.tracking_assignments[best.agent_id] = a
        hq.search_assignments.pop(best.agent_id, None)  # tracking wins
        hq.active.add(best.agent_id)
        won.add(best.agent_id)
        assignments.append(a)
    return assignments


def hq_assign_search(hq: HQState, frontiers, agent_ids, t: float,
                     frontier_utility_fn, bid_fn,
                     blocked_terminals: list | None = None,
                     d_thre: float = 0.0) -> list[Assignment]:
    """Auction frontiers, best expected utility first, to non-active agents.

    frontier_utility_fn ranks frontiers from the HQ's fused viewpoint
    (exploration gain plus report-driven exploitation); bid_fn(agent_id,
    frontier) returns a Bid or None. Winners join the active set and keep
    the task until released. Frontiers within d_thre of a blocked terminal
    (teammates' committed goals) are skipped to keep the team spread.
    """
    if not frontiers:
        return []
    blocked = list(blocked_terminals or [])
    ranked = sorted(frontiers, key=lambda fr: (-frontier_utility_fn(fr), fr.id))
    assignments = []
    for fr in ranked:
        idle = [a for a in sorted(agent_ids) if a not in hq.active]
        if not idle:
            break
        if d_thre > 0.0 and any(fr.centroid.distance_to(p) < d_thre
                                for p in blocked):
            continue
        best: Bid | None = None
        for aid in idle:
            hq.bid_requests += 1
            bid = bid_fn(aid, fr)
            if bid is None:
                continue
            if best is None or bid.utility > best.utility:
                best = bid
        if best is None:
            continue
        hq.active.add(best.agent_id)
        a = Assignment(best.agent_id,
                       ("frontier", (fr.centroid.x, fr.centroid.y)),
                       best.trajectory, t)
        hq.search_assignments[best.agent_id] = a
        blocked.append(fr.centroid)
        assignments.append(a)
    return assignments
