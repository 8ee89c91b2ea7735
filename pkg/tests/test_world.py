import math

import numpy as np
import pytest

from searchtrack.world import (
    GridMap,
    MapFormatError,
    NoPathError,
    Pose,
    VisibilityModel,
    is_free,
    line_of_sight,
    load_map,
    plan_path,
)

from conftest import make_grid, random_grid
from oracles import crossed_cells, dijkstra_cost

SQRT2 = math.sqrt(2.0)


def test_load_map_tiny(tmp_path):
    p = tmp_path / "t.map"
    p.write_text("2 2 1.0\n..\n.#\n")
    g = load_map(str(p))
    assert g.n_free == 3
    assert g.cells[1, 1] == 1


def test_load_map_open50(tmp_path):
    p = tmp_path / "open.map"
    p.write_text("50 50 1.0\n" + "\n".join(["." * 50] * 50) + "\n")
    g = load_map(str(p))
    assert g.n_free == 2500
    assert g.width_m == 50.0


def test_load_map_ragged_row(tmp_path):
    p = tmp_path / "bad.map"
    p.write_text("4 2 1.0\n....\n...\n")
    with pytest.raises(MapFormatError):
        load_map(str(p))


def test_load_map_bad_header(tmp_path):
    p = tmp_path / "bad.map"
    p.write_text("4 x 1.0\n....\n")
    with pytest.raises(MapFormatError):
        load_map(str(p))


def test_is_free_cases():
    g = make_grid(["..", ".#"])
    assert is_free(g, Pose(0.5, 1.5))
    assert not is_free(g, Pose(1.5, 0.5))  # the '#' cell (row 1, col 1)
    assert not is_free(g, Pose(-1.0, -1.0))


def test_los_zero_length_and_wall():
    g = make_grid(["...", "###", "..."])
    a = Pose(0.5, 2.5)
    assert line_of_sight(g, a, a)
    assert not line_of_sight(g, a, Pose(0.5, 0.5))


def test_los_corridor():
    g = make_grid(["#.#", "#.#", "#.#"])
    assert line_of_sight(g, Pose(1.5, 0.5), Pose(1.5, 2.5))


def test_los_matches_cell_enumeration_oracle():
    rng = np.random.default_rng(7)
    for _ in range(60):
        g = random_grid(rng, 15)
        a = (rng.uniform(0, 15), rng.uniform(0, 15))
        b = (rng.uniform(0, 15), rng.uniform(0, 15))
        cells = crossed_cells(15, 1.0, a, b)
        expected = all(g.cells[c] == 0 for c in cells
                       if 0 <= c[0] < 15 and 0 <= c[1] < 15)
        expected = expected and all(0 <= c[0] < 15 and 0 <= c[1] < 15
                                    for c in cells)
        got = line_of_sight(g, Pose(*a), Pose(*b))
        assert got == expected


def test_los_symmetric():
    rng = np.random.default_rng(11)
    for _ in range(200):
        g = random_grid(rng, 12)
        a = Pose(rng.uniform(0, 12), rng.uniform(0, 12))
        b = Pose(rng.uniform(0, 12), rng.uniform(0, 12))
        assert line_of_sight(g, a, b) == line_of_sight(g, b, a)


def test_plan_path_trivial():
    g = make_grid(["..", ".."])
    p = plan_path(g, Pose(0.5, 0.5), Pose(0.5, 0.5))
    assert len(p.waypoints) == 1 and p.length == 0.0


def test_plan_path_diagonal_10x10():
    g = GridMap(np.zeros((10, 10), dtype=np.int8), 1.0)
    p = plan_path(g, Pose(0.5, 0.5), Pose(9.5, 9.5))
    assert abs(p.length - 9 * SQRT2) < 1e-9


def test_plan_path_unreachable():
    g = make_grid(["...", "###", "..."])
    with pytest.raises(NoPathError):
        plan_path(g, Pose(0.5, 2.5), Pose(0.5, 0.5))


def test_plan_path_matches_dijkstra_oracle():
    rng = np.random.default_rng(3)
    checked = 0
    for _ in range(100):
        g = random_grid(rng, 20)
        free = np.argwhere(g.free_mask)
        s, t = free[rng.integers(len(free))], free[rng.integers(len(free))]
        want = dijkstra_cost(np.asarray(g.cells), tuple(s), tuple(t))
        start = g.center_of(*s)
        goal = g.center_of(*t)
        if want is None:
            with pytest.raises(NoPathError):
                plan_path(g, start, goal)
        else:
            got = plan_path(g, start, goal)
            assert abs(got.length - want) < 1e-9
            checked += 1
    assert checked > 50


def test_plan_path_waypoints_free():
    rng = np.random.default_rng(13)
    for _ in range(20):
        g = random_grid(rng, 20)
        free = np.argwhere(g.free_mask)
        s, t = free[rng.integers(len(free))], free[rng.integers(len(free))]
        try:
            p = plan_path(g, g.center_of(*s), g.center_of(*t))
        except NoPathError:
            continue
        assert all(is_free(g, wp) for wp in p.waypoints)


def test_visibility_model_open_disk():
    g = GridMap(np.zeros((21, 21), dtype=np.int8), 1.0)
    vm = VisibilityModel(g, 6.0)
    vis = vm.visible_from((10, 10))
    ii, jj = vis // 21, vis % 21
    d = np.hypot(ii - 10, jj - 10)
    assert (d <= 6.0 + 1e-9).all()
    # disk of radius 6 on a unit grid contains 113 cell centers
    assert len(vis) == 113


def test_visibility_blocked_by_wall():
    g = make_grid(["....."] * 2 + ["#####"] + ["....."] * 2)
    vm = VisibilityModel(g, 4.0)
    vis = vm.visible_from((0, 2))
    rows = set((vis // 5).tolist())
    assert rows <= {0, 1}
