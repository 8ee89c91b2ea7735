"""Static environment: grid map, geometric queries, and global path planning.

The map is known a priori and immutable after loading; every operation here is
pure, so planners may share one GridMap across threads/processes.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

FREE = 0
OBSTACLE = 1

SQRT2 = math.sqrt(2.0)


class MapFormatError(ValueError):
    """Raised when an ASCII map file is malformed."""


class NoPathError(RuntimeError):
    """Raised when no collision-free path exists between two poses."""


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    heading: float = 0.0  # unused by omnidirectional sensing

    def distance_to(self, other: "Pose") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass
class Path:
    waypoints: list[Pose]
    length: float


class GridMap:
    """Occupancy grid with free/obstacle cells and metric resolution.

    Cell (i, j) = (row, col); row 0 is the top of the ASCII file, i.e. max y.
    Cell (i, j) spans x in [j*res, (j+1)*res) and y in
    [(H-1-i)*res, (H-i)*res).
    """

    def __init__(self, cells: np.ndarray, resolution: float):
        if cells.ndim != 2:
            raise MapFormatError("cell array must be 2-D")
        if resolution <= 0:
            raise MapFormatError("resolution must be positive")
        self.cells = np.ascontiguousarray(cells.astype(np.int8))
        self.cells.setflags(write=False)
        self.height_cells, self.width_cells = self.cells.shape
        self.resolution = float(resolution)
        self.obstacle_mask = self.cells == OBSTACLE
        self.free_mask = ~self.obstacle_mask
        self.n_free = int(self.free_mask.sum())

    # -- coordinate transforms -------------------------------------------

    def cell_of(self, x: float, y: float) -> tuple[int, int] | None:
        """Map a point to its (row, col) cell, or None if out of bounds."""
        res = self.resolution
        j = int(math.floor(x / res))
        i = self.height_cells - 1 - int(math.floor(y / res))
        if 0 <= i < self.height_cells and 0 <= j < self.width_cells:
            return (i, j)
        return None

    def center_of(self, i: int, j: int) -> Pose:
        res = self.resolution
        return Pose((j + 0.5) * res, (self.height_cells - 1 - i + 0.5) * res)

    @property
    def width_m(self) -> float:
        return self.width_cells * self.resolution

    @property
    def height_m(self) -> float:
        return self.height_cells * self.resolution

    def is_free_cell(self, i: int, j: int) -> bool:
        return (
            0 <= i < self.height_cells
            and 0 <= j < self.width_cells
            and self.cells[i, j] == FREE
        )

    def free_cell_list(self) -> list[tuple[int, int]]:
        ii, jj = np.nonzero(self.free_mask)
        return list(zip(ii.tolist(), jj.tolist()))


def load_map(path: str) -> GridMap:
    """Parse the ASCII map format.

    Line 1: ``width height resolution``; then ``height`` rows of ``width``
    characters drawn from {'.', '#'}; row 0 of the file is the top (max y).
    """
    with open(path, "r", encoding="utf-8") as f:
        lines = [ln.rstrip("\n") for ln in f]
    if not lines:
        raise MapFormatError(f"{path}: empty map file")
    header = lines[0].split()
    if len(header) != 3:
        raise MapFormatError(f"{path}: header must be 'width height resolution'")
    try:
        width, height = int(header[0]), int(header[1])
        resolution = float(header[2])
    except ValueError as exc:
        raise MapFormatError(f"{path}: non-numeric header field") from exc
    if width <= 0 or height <= 0 or resolution <= 0:
        raise MapFormatError(f"{path}: header values must be positive")
    rows = lines[1:]
    if len(rows) < height:
        raise MapFormatError(f"{path}: expected {height} rows, found {len(rows)}")
    cells = np.zeros((height, width), dtype=np.int8)
    for i in range(height):
        row = rows[i]
        if len(row) != width:
            raise MapFormatError(
                f"{path}: row {i} has length {len(row)}, expected {width}"
            )
        for j, ch in enumerate(row):
            if ch == "#":
                cells[i, j] = OBSTACLE
            elif ch == ".":
                cells[i, j] = FREE
            else:
                raise MapFormatError(f"{path}: bad character {ch!r} in row {i}")
    return GridMap(cells, resolution)


def dump_map(grid: GridMap) -> str:
    """Inverse of load_map; used by scenario generators and tests."""
    lines = [f"{grid.width_cells} {grid.height_cells} {grid.resolution}"]
    for i in range(grid.height_cells):
        lines.append(
            "".join("#" if grid.cells[i, j] else "." for j in range(grid.width_cells))
        )
    return "\n".join(lines) + "\n"


def is_free(grid: GridMap, p: Pose) -> bool:
    """True iff p is within bounds and its cell is free."""
    cell = grid.cell_of(p.x, p.y)
    if cell is None:
        return False
    return grid.cells[cell] == FREE


def _cells_crossed(grid: GridMap, a: Pose, b: Pose) -> list[tuple[int, int]]:
    """All cells whose interior the segment a->b passes through.

    Dense sampling at a small fraction of the resolution; endpoints are
    ordered canonically so the crossed set is identical for (a,b) and (b,a).
    """
    if (a.x, a.y) > (b.x, b.y):
        a, b = b, a
    dist = a.distance_to(b)
    step = grid.resolution * 0.05
    n = max(1, int(math.ceil(dist / step)))
    ts = np.linspace(0.0, 1.0, n + 1)
    xs = a.x + (b.x - a.x) * ts
    ys = a.y + (b.y - a.y) * ts
    res = grid.resolution
    jj = np.floor(xs / res).astype(np.int64)
    ii = grid.height_cells - 1 - np.floor(ys / res).astype(np.int64)
    seen: set[tuple[int, int]] = set()
    out: list[tuple[int, int]] = []
    for i, j in zip(ii.tolist(), jj.tolist()):
        if (i, j) not in seen:
            seen.add((i, j))
            out.append((i, j))
    return out


def line_of_sight(grid: GridMap, a: Pose, b: Pose) -> bool:
    """True iff the segment a->b crosses no obstacle cell."""
    for i, j in _cells_crossed(grid, a, b):
        if 0 <= i < grid.height_cells and 0 <= j < grid.width_cells:
            if grid.cells[i, j] == OBSTACLE:
                return False
        else:
            return False
    return True


# -- field-of-view queries -------------------------------------------------

class VisibilityModel:
    """Precomputed omnidirectional FoV disk with center-to-center ray checks.

    Cell B is visible from the cell containing the sensor iff B's center is
    within range of that cell's center and the straight segment between the
    two centers crosses no obstacle cell. Rays are precomputed per disk
    offset against a padded obstacle grid, so a visibility query is a single
    fancy-index per pose.
    """

    def __init__(self, grid: GridMap, range_m: float):
        self.grid = grid
        self.range_m = float(range_m)
        res = grid.resolution
        r_cells = int(math.ceil(range_m / res))
        offs = []
        for di in range(-r_cells, r_cells + 1):
            for dj in range(-r_cells, r_cells + 1):
                if math.hypot(di, dj) * res <= range_m + 1e-9:
                    offs.append((di, dj))
        offs.sort()
        self.offsets = np.array(offs, dtype=np.int64)

        pad = r_cells + 1
        self.pad = pad
        padded = np.ones(
            (grid.height_cells + 2 * pad, grid.width_cells + 2 * pad), dtype=bool
        )
        padded[pad:-pad, pad:-pad] = grid.obstacle_mask
        self._padded_flat = padded.ravel()
        self._pw = padded.shape[1]
        self._open_map = not grid.obstacle_mask.any()

        rays = []
        for di, dj in offs:
            rays.append(self._intermediate_cells(di, dj))
        maxlen = max((len(r) for r in rays), default=0)
        maxlen = max(maxlen, 1)
        ray_idx = np.zeros((len(offs), maxlen), dtype=np.int64)
        ray_valid = np.zeros((len(offs), maxlen), dtype=bool)
        for k, cells in enumerate(rays):
            for m, (di, dj) in enumerate(cells):
                ray_idx[k, m] = di * self._pw + dj
                ray_valid[k, m] = True
        self._ray_idx = ray_idx
        self._ray_valid = ray_valid

    @staticmethod
    def _intermediate_cells(di: int, dj: int) -> list[tuple[int, int]]:
        """Cells strictly between (0,0) and (di,dj), crossed center-to-center."""
        dist = math.hypot(di, dj)
        if dist == 0.0:
            return []
        n = max(1, int(math.ceil(dist / 0.05)))
        out: list[tuple[int, int]] = []
        seen = {(0, 0), (di, dj)}
        for s in range(n + 1):
            f = s / n
            # sample along the segment between cell centers
            y = 0.5 + di * f
            x = 0.5 + dj * f
            cell = (math.floor(y), math.floor(x))
            if cell not in seen:
                seen.add(cell)
                out.append(cell)
        return out

    def visible_from(self, cell: tuple[int, int]) -> np.ndarray:
        """Flat indices (into the unpadded grid) of free cells visible from cell."""
        i, j = cell
        grid = self.grid
        abs_ij = self.offsets + np.array([i, j], dtype=np.int64)
        in_bounds = (
            (abs_ij[:, 0] >= 0)
            & (abs_ij[:, 0] < grid.height_cells)
            & (abs_ij[:, 1] >= 0)
            & (abs_ij[:, 1] < grid.width_cells)
        )
        if self._open_map:
            ok = in_bounds
        else:
            base = (i + self.pad) * self._pw + (j + self.pad)
            hits = self._padded_flat[self._ray_idx + base] & self._ray_valid
            ok = in_bounds & ~hits.any(axis=1)
        flat = abs_ij[ok, 0] * grid.width_cells + abs_ij[ok, 1]
        return flat[grid.free_mask.ravel()[flat]]


# -- grid path planning ---------------------------------------------------

# 8-connected moves: (di, dj, cost in cells). Diagonals cost sqrt(2) and are
# blocked when either orthogonal neighbor is an obstacle (no corner cutting).
_MOVES = [
    (-1, 0, 1.0),
    (1, 0, 1.0),
    (0, -1, 1.0),
    (0, 1, 1.0),
    (-1, -1, SQRT2),
    (-1, 1, SQRT2),
    (1, -1, SQRT2),
    (1, 1, SQRT2),
]


def _neighbors(grid: GridMap, i: int, j: int):
    for di, dj, cost in _MOVES:
        ni, nj = i + di, j + dj
        if not grid.is_free_cell(ni, nj):
            continue
        if di != 0 and dj != 0:
            if not (grid.is_free_cell(i, nj) and grid.is_free_cell(ni, j)):
                continue
        yield ni, nj, cost


def _octile(i0: int, j0: int, i1: int, j1: int) -> float:
    di, dj = abs(i0 - i1), abs(j0 - j1)
    return (di + dj) + (SQRT2 - 2.0) * min(di, dj)


def plan_path(grid: GridMap, start: Pose, goal: Pose) -> Path:
    """Minimum-cost 8-connected grid path from start's cell to goal's cell.

    A* with the octile heuristic; ties broken on the lowest flattened cell
    index so the result is deterministic. Collinear runs are collapsed into
    single waypoint segments, which preserves the grid-optimal length.
    """
    s = grid.cell_of(start.x, start.y)
    g = grid.cell_of(goal.x, goal.y)
    if s is None or g is None or grid.cells[s] != FREE or grid.cells[g] != FREE:
        raise NoPathError("start or goal not in free space")
    if s == g:
        return Path([Pose(start.x, start.y)], 0.0)

    w = grid.width_cells
    dist = {s: 0.0}
    parent: dict[tuple[int, int], tuple[int, int]] = {}
    # heap entries: (f, tie index, cell)
    heap = [(_octile(*s, *g), s[0] * w + s[1], s)]
    closed: set[tuple[int, int]] = set()
    while heap:
        f, _, cur = heapq.heappop(heap)
        if cur in closed:
            continue
        if cur == g:
            break
        closed.add(cur)
        d0 = dist[cur]
        for ni, nj, cost in _neighbors(grid, *cur):
            nd = d0 + cost
            nxt = (ni, nj)
            if nd < dist.get(nxt, math.inf) - 1e-12:
                dist[nxt] = nd
                parent[nxt] = cur
                heapq.heappush(
                    heap, (nd + _octile(ni, nj, *g), ni * w + nj, nxt)
                )
    if g not in dist:
        raise NoPathError(f"goal cell {g} unreachable from {s}")

    cells = [g]
    while cells[-1] != s:
        cells.append(parent[cells[-1]])
    cells.reverse()

    # collapse collinear runs; keep the first/last cell centers as waypoints
    waypoints = [grid.center_of(*cells[0])]
    for k in range(1, len(cells) - 1):
        d_prev = (cells[k][0] - cells[k - 1][0], cells[k][1] - cells[k - 1][1])
        d_next = (cells[k + 1][0] - cells[k][0], cells[k + 1][1] - cells[k][1])
        if d_prev != d_next:
            waypoints.append(grid.center_of(*cells[k]))
    waypoints.append(grid.center_of(*cells[-1]))
    return Path(waypoints, dist[g] * grid.resolution)
