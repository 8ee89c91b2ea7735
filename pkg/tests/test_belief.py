import math

import numpy as np
import pytest

from searchtrack.belief import (
    AllZeroTrust,
    OccupancyBelief,
    ReportEstimate,
    TrackEstimate,
    apply_time_decay,
    cell_entropy,
    expected_entropy_after_obs,
    fuse_occupancy,
    gaussian_entropy,
    information_trace,
    is_tracked,
    kf_predict,
    kf_update,
    observe_cells,
)
from searchtrack.entities import Measurement, SensorModel
from searchtrack.world import GridMap, Pose, VisibilityModel

from oracles import grid_bayes_1d


def open_grid(n=9):
    return GridMap(np.zeros((n, n), dtype=np.int8), 1.0)


def meas(x, y, var=0.49, tid=0, t=1.0):
    return Measurement(tid, Pose(x, y), np.eye(2) * var, t, 0)


def test_observe_cells_bayes_values():
    g = open_grid()
    b = OccupancyBelief(g)
    s = SensorModel(3.0, 0.1, 0.05, 0.7, 1.3)
    observe_cells(b, Pose(4.5, 4.5), s, [meas(4.5, 4.5)], g, 1.0)
    assert abs(b.p[4, 4] - 0.9 * 0.5 / (0.9 * 0.5 + 0.05 * 0.5)) < 1e-12
    assert abs(b.p[4, 5] - 0.1 * 0.5 / (0.1 * 0.5 + 0.95 * 0.5)) < 1e-12


def test_observe_cells_noiseless_detection():
    g = open_grid()
    b = OccupancyBelief(g)
    s = SensorModel(3.0, 0.0, 0.0, 0.7, 1.3)
    observe_cells(b, Pose(4.5, 4.5), s, [meas(4.5, 4.5)], g, 1.0)
    assert b.p[4, 4] == 1.0
    assert b.p[4, 5] == 0.0


def test_observe_cells_stamps_last_seen():
    g = open_grid()
    b = OccupancyBelief(g)
    s = SensorModel(2.0, 0.1, 0.0, 0.7, 1.3)
    observe_cells(b, Pose(4.5, 4.5), s, [], g, 2.5)
    assert b.last_seen[4, 4] == 2.5
    assert math.isnan(b.last_seen[0, 0])


def test_decay_closed_form_both_sides():
    g = open_grid()
    b = OccupancyBelief(g, decay_rate=1.0 / 90.0)
    b.base[0, 0], b.p[0, 0], b.last_seen[0, 0] = 0.9, 0.9, 0.0
    b.base[0, 1], b.p[0, 1], b.last_seen[0, 1] = 0.1, 0.1, 0.0
    apply_time_decay(b, 90.0, 0, 3)
    assert abs(b.p[0, 0] - (0.5 + 0.4 * math.exp(-1.0))) < 1e-12
    assert abs(b.p[0, 1] - (0.5 - 0.4 * math.exp(-1.0))) < 1e-12


def test_decay_zero_dt_noop():
    g = open_grid()
    b = OccupancyBelief(g)
    b.base[0, 0], b.p[0, 0], b.last_seen[0, 0] = 0.9, 0.9, 5.0
    apply_time_decay(b, 5.0, 0, 3)
    assert b.p[0, 0] == 0.9


def test_decay_low_cells_freeze_when_all_detected():
    g = open_grid()
    b = OccupancyBelief(g)
    b.base[0, 0], b.p[0, 0], b.last_seen[0, 0] = 0.1, 0.1, 0.0
    b.base[0, 1], b.p[0, 1], b.last_seen[0, 1] = 0.9, 0.9, 0.0
    apply_time_decay(b, 90.0, 3, 3)
    assert b.p[0, 0] == 0.1                    # low side frozen
    assert b.p[0, 1] < 0.9                     # high side still decays


def test_decay_converges_to_half():
    g = open_grid()
    b = OccupancyBelief(g, decay_rate=1.0 / 90.0)
    for p0 in (0.001, 0.3, 0.7, 0.999):
        b.base[0, 0], b.p[0, 0], b.last_seen[0, 0] = p0, p0, 0.0
        apply_time_decay(b, 1e5, 0, None)
        assert abs(b.p[0, 0] - 0.5) < 1e-6


def test_decay_monotone_toward_half_never_crossing():
    g = open_grid()
    for p0 in (0.05, 0.45, 0.55, 0.95):
        prev = p0
        for dt in (1.0, 5.0, 25.0, 125.0, 625.0):
            b = OccupancyBelief(g, decay_rate=1.0 / 90.0)
            b.base[0, 0], b.p[0, 0], b.last_seen[0, 0] = p0, p0, 0.0
            apply_time_decay(b, dt, 0, None)
            v = b.p[0, 0]
            assert abs(v - 0.5) < abs(prev - 0.5) or prev == p0
            assert (v - 0.5) * (p0 - 0.5) >= 0.0  # same side, never crosses
            prev = v


def test_expected_entropy_never_exceeds_prior():
    ps = np.linspace(0.0, 1.0, 50)
    als = np.linspace(0.0, 1.0, 50)
    for beta in (0.0, 0.05, 0.3, 0.9):
        for a in als:
            gain = cell_entropy(ps) - expected_entropy_after_obs(ps, a, beta)
            assert (gain >= -1e-9).all()


def test_fuse_weights_and_values():
    g = open_grid()
    b1, b2 = OccupancyBelief(g, owner=1), OccupancyBelief(g, owner=2)
    b1.p[:] = 1.0
    b2.p[:] = 0.0
    f = fuse_occupancy([(b1, 3.0), (b2, 1.0)])
    assert abs(f.p[0, 0] - 0.75) < 1e-12
    assert abs(sum(f.weights.values()) - 1.0) < 1e-12
    assert f.weights[1] == 0.75


def test_fuse_single_source_identity():
    g = open_grid()
    b = OccupancyBelief(g, owner=3)
    b.p[2, 2] = 0.9
    f = fuse_occupancy([(b, 0.5)])
    assert f.weights == {3: 1.0}
    assert f.p[2, 2] == 0.9


def test_fuse_all_zero_trust():
    g = open_grid()
    with pytest.raises(AllZeroTrust):
        fuse_occupancy([(OccupancyBelief(g), 0.0), (OccupancyBelief(g), 0.0)])


def test_fuse_weight_monotone_in_trace():
    g = open_grid()
    b1, b2 = OccupancyBelief(g, owner=1), OccupancyBelief(g, owner=2)
    prev = 0.0
    for tr in (0.5, 1.0, 2.0, 8.0):
        f = fuse_occupancy([(b1, tr), (b2, 1.0)])
        assert f.weights[1] > prev
        prev = f.weights[1]


def test_kf_predict():
    e = TrackEstimate(0, np.zeros(2), np.eye(2))
    out = kf_predict(e, 1.0, 0.04)
    assert np.allclose(out.covariance, np.eye(2) * 1.04)
    assert np.allclose(kf_predict(e, 0.0, 0.04).covariance, np.eye(2))
    assert np.allclose(kf_predict(e, 7.0, 0.0).covariance, np.eye(2))


def test_kf_update_textbook():
    e = TrackEstimate(0, np.zeros(2), np.eye(2) * 4.0)
    out = kf_update(e, meas(2.0, 0.0, var=4.0))
    assert np.allclose(out.mean, [1.0, 0.0])
    assert np.allclose(out.covariance, np.eye(2) * 2.0)


def test_kf_update_perfect_measurement_limit():
    e = TrackEstimate(0, np.zeros(2), np.eye(2) * 4.0)
    out = kf_update(e, meas(3.0, -1.0, var=1e-9))
    assert np.allclose(out.mean, [3.0, -1.0], atol=1e-6)


def test_kf_update_never_increases_trace():
    rng = np.random.default_rng(0)
    for _ in range(200):
        pv = rng.uniform(0.1, 10.0)
        e = TrackEstimate(0, rng.normal(0, 5, 2), np.eye(2) * pv)
        out = kf_update(e, meas(*rng.normal(0, 5, 2), var=rng.uniform(0.1, 10.0)))
        assert np.trace(out.covariance) <= np.trace(e.covariance) + 1e-12


def test_kf_update_matches_grid_bayes_oracle():
    rng = np.random.default_rng(42)
    for _ in range(50):
        pm = rng.uniform(-3, 3)
        pv = rng.uniform(0.2, 4.0)
        z = pm + rng.normal(0, math.sqrt(pv))
        mv = rng.uniform(0.2, 4.0)
        want_mean, want_var = grid_bayes_1d(pm, pv, z, mv)
        e = TrackEstimate(0, np.array([pm, 0.0]), np.diag([pv, 1.0]))
        out = kf_update(e, Measurement(0, Pose(z, 0.0), np.diag([mv, 1e6]),
                                       0.0, 0))
        assert abs(out.mean[0] - want_mean) < 1e-3
        assert abs(out.covariance[0, 0] - want_var) < 1e-3


def test_entropies():
    assert cell_entropy(0.5) == 1.0
    assert cell_entropy(0.0) == 0.0
    assert cell_entropy(1.0) == 0.0
    assert abs(cell_entropy(0.25) - 0.8112781244591328) < 1e-12
    assert abs(gaussian_entropy(np.eye(2)) - 2.8378770664093453) < 1e-9
    assert abs(gaussian_entropy(np.eye(2) * 4.0) - 4.224171427529236) < 1e-9
    # doubling the determinant adds half a log(2)
    h1 = gaussian_entropy(np.diag([1.0, 2.0]))
    h2 = gaussian_entropy(np.diag([2.0, 2.0]))
    assert abs((h2 - h1) - 0.5 * math.log(2.0)) < 1e-12
    with pytest.raises(ValueError):
        gaussian_entropy(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_is_tracked_boundary_inclusive():
    assert is_tracked(TrackEstimate(0, np.zeros(2), np.eye(2) * 0.9), 2.0)
    assert not is_tracked(TrackEstimate(0, np.zeros(2), np.eye(2) * 1.5), 2.0)
    assert is_tracked(TrackEstimate(0, np.zeros(2), np.eye(2)), 2.0)


def test_information_trace_floor_and_sum():
    s = SensorModel(6.0, 0.1, 0.0, 0.7, 1.3)
    base = information_trace([], s)
    assert base > 0.0
    tr = TrackEstimate(0, np.zeros(2), np.eye(2) * 0.5)
    assert information_trace([tr], s) == pytest.approx(base + 4.0)
    cleared = TrackEstimate(1, np.zeros(2), np.eye(2) * 0.5, cleared=True)
    assert information_trace([cleared], s) == pytest.approx(base)
