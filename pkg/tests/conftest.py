import os

import numpy as np
import pytest

from searchtrack.scenario import make_open_map_file
from searchtrack.world import GridMap


@pytest.fixture(scope="session")
def cache_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cache")
    os.environ["SEARCHTRACK_CACHE"] = str(d)
    return d


@pytest.fixture(scope="session")
def open50(tmp_path_factory):
    path = tmp_path_factory.mktemp("maps") / "open50.map"
    make_open_map_file(str(path), 50)
    return str(path)


@pytest.fixture(scope="session")
def default_weights(cache_dir):
    from searchtrack.harness import ensure_default_weights
    return ensure_default_weights()


def make_grid(rows: list[str], resolution: float = 1.0) -> GridMap:
    cells = np.array([[1 if ch == "#" else 0 for ch in row] for row in rows],
                     dtype=np.int8)
    return GridMap(cells, resolution)


def random_grid(rng: np.random.Generator, size: int = 20,
                p_obstacle: float = 0.25) -> GridMap:
    cells = (rng.random((size, size)) < p_obstacle).astype(np.int8)
    cells[0, 0] = 0
    return GridMap(cells, 1.0)
