import numpy as np
import pytest

from searchtrack.coordination import (
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
    check_assign_available,
    deliver,
    expected_post_action_trace,
    hq_assign_search,
    hq_assign_tracking,
)
from searchtrack.belief import TrackEstimate
from searchtrack.planning import Frontier
from searchtrack.world import Pose


def sigma_at(d):
    return 0.7 + 0.6 * min(d / 6.0, 1.0)


def record(tid, trace=4.0, detectors=(0,), distance=3.0, tick=0):
    rec = TargetRecord(tid, TrackEstimate(tid, np.zeros(2),
                                          np.eye(2) * (trace / 2.0)))
    for aid in detectors:
        rec.detectors[aid] = DetectorReport(aid, trace, distance, 1.0, tick)
    return rec


def test_bus_delivery_extremes():
    rng = np.random.default_rng(0)
    bus = MessageBus(p_cf=0.0)
    assert all(deliver(bus, Message(CH_AGENT, 0, -1, "x", None, 0), rng)
               for _ in range(100))
    bus = MessageBus(p_cf=1.0)
    assert not any(deliver(bus, Message(CH_AGENT, 0, -1, "x", None, 0), rng)
                   for _ in range(100))


def test_bus_delivery_frequency():
    rng = np.random.default_rng(1)
    bus = MessageBus(p_cf=0.4)
    n = 100_000
    ok = sum(deliver(bus, Message(CH_AGENT, 0, -1, "x", None, 0), rng)
             for _ in range(n))
    assert abs(ok / n - 0.6) < 0.01


def test_bus_channel_classes_and_order():
    rng = np.random.default_rng(2)
    bus = MessageBus(p_cf=1.0, p_ef=0.0, latency=2)
    assert not bus.send(Message(CH_AGENT, 0, -1, "a", None, 0), rng)
    for k in range(5):
        assert bus.send(Message(CH_REPORT, 9, -1, "r", k, 0), rng)
    assert bus.collect(1) == []
    got = [m.payload for m in bus.collect(2)]
    assert got == [0, 1, 2, 3, 4]
    assert bus.collect(2) == []


def test_hysteresis():
    hq = HQState(hold_time=5.0)
    assert check_assign_available(hq, 0, 10.0)
    hq.registry[7] = record(7)
    hq.tracking_assignments[0] = Assignment(0, ("target", 7), None, 9.0)
    assert not check_assign_available(hq, 0, 10.0)
    assert check_assign_available(hq, 0, 14.0)
    hq.registry[7].cleared = True
    assert check_assign_available(hq, 0, 10.0)


def test_tracking_auction_best_bid_wins():
    hq = HQState()
    hq.registry[0] = record(0, detectors=(0, 1))
    bids = {0: 0.8, 1: 0.6}
    out = hq_assign_tracking(hq, 0.0,
                             lambda aid, tid: Bid(aid, ("target", tid), None,
                                                  bids[aid]),
                             sigma_at)
    assert len(out) == 1 and out[0].agent_id == 0
    assert hq.tracking_assignments[0].task == ("target", 0)


def test_tracking_auction_greedy_priority_order():
    hq = HQState()
    # target 5 is nearly done (small trace), target 6 is fresh
    hq.registry[5] = record(5, trace=1.0, detectors=(0,), distance=1.0)
    hq.registry[6] = record(6, trace=9.0, detectors=(0,), distance=5.0)
    calls = []

    def bid(aid, tid):
        calls.append(tid)
        return Bid(aid, ("target", tid), None, 1.0)

    out = hq_assign_tracking(hq, 0.0, bid, sigma_at)
    # one agent, two targets: the lower expected-trace target pops first
    assert calls[0] == 5
    assert len(out) == 1 and out[0].task == ("target", 5)


def test_tracking_auction_skips_cleared():
    hq = HQState()
    hq.registry[0] = record(0)
    hq.registry[0].cleared = True
    out = hq_assign_tracking(hq, 0.0,
                             lambda a, t: Bid(a, ("target", t), None, 1.0),
                             sigma_at)
    assert out == []


def test_tracking_one_win_per_agent_per_round():
    hq = HQState()
    hq.registry[0] = record(0, trace=1.0, detectors=(0, 1))
    hq.registry[1] = record(1, trace=2.0, detectors=(0, 1))
    out = hq_assign_tracking(hq, 0.0,
                             lambda a, t: Bid(a, ("target", t), None,
                                              10.0 - a),
                             sigma_at)
    assert len(out) == 2
    assert {a.agent_id for a in out} == {0, 1}


def test_expected_post_action_trace_ordering():
    near = record(0, trace=4.0, distance=0.5)
    far = record(1, trace=4.0, distance=6.0)
    assert (expected_post_action_trace(near, sigma_at, 0.04)
            < expected_post_action_trace(far, sigma_at, 0.04))


def frontier(fid, x, y):
    return Frontier(fid, Pose(x, y), [(0, 0)])


def test_search_auction_idle_only():
    hq = HQState()
    frs = [frontier(0, 1.5, 1.5)]
    out = hq_assign_search(hq, frs, [0, 1], 0.0, lambda fr: 1.0,
                           lambda aid, fr: Bid(aid, ("frontier", fr.id), None,
                                               1.0 + aid))
    assert len(out) == 1 and out[0].agent_id == 1  # higher bid wins
    assert 1 in hq.active
    # no idle agents left -> nothing assigned
    hq2 = HQState()
    hq2.active = {0, 1}
    assert hq_assign_search(hq2, frs, [0, 1], 0.0, lambda fr: 1.0,
                            lambda a, f: Bid(a, ("frontier", f.id), None, 1.0)
                            ) == []


def test_search_auction_report_bias_changes_order():
    hq = HQState()
    frs = [frontier(0, 1.5, 1.5), frontier(1, 9.5, 9.5)]
    utilities = {0: 0.4, 1: 0.9}  # frontier 1 carries a report bonus
    won = []

    def bid(aid, fr):
        won.append(fr.id)
        return Bid(aid, ("frontier", fr.id), None, 1.0)

    hq_assign_search(hq, frs, [0], 0.0, lambda fr: utilities[fr.id], bid)
    assert won[0] == 1


def test_search_auction_spread_blocking():
    hq = HQState()
    frs = [frontier(0, 1.5, 1.5), frontier(1, 9.5, 9.5)]
    out = hq_assign_search(hq, frs, [0], 0.0, lambda fr: 1.0 - 0.1 * fr.id,
                           lambda a, f: Bid(a, ("frontier", f.id), None, 1.0),
                           blocked_terminals=[Pose(1.5, 2.0)], d_thre=3.5)
    assert len(out) == 1
    assert out[0].task == ("frontier", (9.5, 9.5))


def test_tracking_keeps_registry_pure_function_of_messages():
    hq = HQState()
    hq.registry[0] = record(0, detectors=(0, 1))
    hq.registry[1] = record(1, detectors=(1,))
    before = sorted((tid, sorted(r.detectors)) for tid, r in hq.registry.items())
    hq_assign_tracking(hq, 0.0,
                       lambda a, t: Bid(a, ("target", t), None, a + t),
                       sigma_at)
    after = sorted((tid, sorted(r.detectors)) for tid, r in hq.registry.items())
    assert before == after


def test_bid_request_count_quadratic():
    # all agents detect all targets: requests grow ~ n^2
    counts = {}
    for n in (2, 4, 8):
        hq = HQState(hold_time=0.0)
        for tid in range(n):
            hq.registry[tid] = record(tid, detectors=tuple(range(n)))
        hq_assign_tracking(hq, 0.0,
                           lambda a, t: Bid(a, ("target", t), None, 1.0),
                           sigma_at)
        counts[n] = hq.bid_requests
    # doubling n should far more than double the requests
    assert counts[4] > 2.5 * counts[2]
    assert counts[8] > 2.5 * counts[4]
    # and stay bounded by n^2
    for n, c in counts.items():
        assert c <= n * n
