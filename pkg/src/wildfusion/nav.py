"""Pixel-level traversability, costmaps (full, semantic-only, elevation-only) and A*."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .scene import DEFAULT_SEMANTICS, SemanticTable

IMPASSABLE = math.inf
PROVENANCES = ("full", "semantic-only", "elevation-only")

DISTANCE_VARIANCE = 6.0  # m^2
COST_GAIN = 10.0
IMPASSABLE_BELOW = 0.1
SLOPE_GAIN = 20.0
SLOPE_FREE = 0.3
MAX_STEP = 0.25
CELL_SIZE = 0.1

_NEIGHBOURS = tuple((dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if dr or dc)


@dataclass(frozen=True)
class GridSpec:
    """Planar grid; cell ``(row, col)`` covers ``x`` from ``origin_x + col * cell_size``
    and ``y`` from ``origin_y + row * cell_size``. Grids are ``(height, width)`` arrays."""

    origin: tuple
    cell_size: float
    width: int
    height: int

    def __post_init__(self):
        if not self.cell_size > 0:
            raise InputError("cell_size must be positive")
        if self.width < 1 or self.height < 1:
            raise InputError("grid must be at least 1 x 1")
        if len(self.origin) != 3 or not np.all(np.isfinite(self.origin)):
            raise InputError("origin must be a finite 3-vector")

    @classmethod
    def covering(cls, xmin, xmax, ymin, ymax, cell_size=CELL_SIZE, z=0.0) -> "GridSpec":
        width = max(1, int(math.ceil((xmax - xmin) / cell_size - 1e-9)))
        height = max(1, int(math.ceil((ymax - ymin) / cell_size - 1e-9)))
        return cls((float(xmin), float(ymin), float(z)), float(cell_size), width, height)

    @property
    def shape(self) -> tuple:
        return (self.height, self.width)

    def x_centers(self) -> np.ndarray:
        return self.origin[0] + (np.arange(self.width) + 0.5) * self.cell_size

    def y_centers(self) -> np.ndarray:
        return self.origin[1] + (np.arange(self.height) + 0.5) * self.cell_size

    def centers(self) -> np.ndarray:
        """``(height, width, 2)`` cell-center xy coordinates."""
        X, Y = np.meshgrid(self.x_centers(), self.y_centers())
        return np.stack([X, Y], axis=-1)

    def contains(self, cell) -> bool:
        r, c = cell
        return 0 <= r < self.height and 0 <= c < self.width

    def cell_of(self, xy) -> tuple:
        """Cell containing a world ``(x, y)``."""
        c = int(math.floor((xy[0] - self.origin[0]) / self.cell_size))
        r = int(math.floor((xy[1] - self.origin[1]) / self.cell_size))
        if not self.contains((r, c)):
            raise InputError(f"point {tuple(xy)} lies outside the grid")
        return (r, c)

    def center_of(self, cell) -> np.ndarray:
        r, c = cell
        return np.array([self.origin[0] + (c + 0.5) * self.cell_size,
                         self.origin[1] + (r + 0.5) * self.cell_size])


@dataclass(frozen=True)
class Costmap:
    spec: GridSpec
    cost: np.ndarray  # (height, width); IMPASSABLE = inf
    provenance: str = "full"

    def __post_init__(self):
        cost = np.asarray(self.cost, dtype=float)
        if cost.shape != self.spec.shape:
            raise InputError(f"cost grid {cost.shape} does not match spec {self.spec.shape}")
        finite = np.isfinite(cost)
        if np.any(np.isnan(cost)) or np.any(cost[finite] < 1.0) or np.any(cost[~finite] < 0):
            raise InputError("costs must be >= 1 or IMPASSABLE")
        if self.provenance not in PROVENANCES:
            raise InputError(f"unknown provenance {self.provenance!r}")
        object.__setattr__(self, "cost", cost)

    def passable(self) -> np.ndarray:
        return np.isfinite(self.cost)


@dataclass(frozen=True)
class Path:
    cells: tuple  # ((row, col), ...)
    total_cost: float

    def __len__(self) -> int:
        return len(self.cells)

    def length_m(self, cell_size: float) -> float:
        c = np.asarray(self.cells, dtype=float)
        return float(np.linalg.norm(np.diff(c, axis=0), axis=1).sum() * cell_size) if len(c) > 1 else 0.0


class _NoPath:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __bool__(self) -> bool:
        return False

    def __repr__(self) -> str:
        return "NO_PATH"


NO_PATH = _NoPath()


def _check_unit(name, grid):
    grid = np.asarray(grid, dtype=float)
    if np.any(~np.isfinite(grid)) or np.any(grid < 0) or np.any(grid > 1):
        raise InputError(f"{name} must lie in [0, 1]")
    return grid


def semantic_mask(semantic, table: SemanticTable = DEFAULT_SEMANTICS) -> np.ndarray:
    """Per-cell base traversability of the class; NULL (unknown) cells get 0."""
    ids = np.asarray(semantic)
    if ids.size and (not np.issubdtype(ids.dtype, np.integer) or ids.min() < 0 or ids.max() > table.null_id):
        raise InputError(f"semantic ids must be integers in [0, {table.null_id}]")
    return table.traversability_lut()[ids]


def gaussian_weight(spec: GridSpec, robot_cell, variance: float = DISTANCE_VARIANCE) -> np.ndarray:
    """``exp(-d^2 / (2 variance))`` with ``d`` the metric distance between cell centers."""
    if not spec.contains(robot_cell):
        raise InputError(f"robot cell {tuple(robot_cell)} lies outside the grid")
    if not variance > 0:
        raise InputError("variance must be positive")
    rows, cols = np.indices(spec.shape)
    d2 = ((rows - robot_cell[0]) ** 2 + (cols - robot_cell[1]) ** 2) * spec.cell_size**2
    return np.exp(-d2 / (2.0 * variance))


def pixel_traversability(sem_mask, weight, t_model: float, mode: str = "blend") -> np.ndarray:
    """Semantic mask times the distance mask ``1 + W (t_model - 1)``.

    ``mode="product"`` uses the literal triple product ``sem * W * t_model``.
    """
    sem_mask = _check_unit("semantic mask", sem_mask)
    weight = _check_unit("distance weight", weight)
    if sem_mask.shape != weight.shape:
        raise InputError(f"grid shapes differ: {sem_mask.shape} vs {weight.shape}")
    if not 0.0 <= t_model <= 1.0:
        raise InputError("t_model must lie in [0, 1]")
    if mode == "blend":
        distance = 1.0 + weight * (t_model - 1.0)
    elif mode == "product":
        distance = weight * t_model
    else:
        raise InputError(f"unknown mode {mode!r}")
    return np.clip(sem_mask * distance, 0.0, 1.0)


def costmap_from_traversability(T, spec: GridSpec, k: float = COST_GAIN, tau: float = IMPASSABLE_BELOW,
                                provenance: str = "full") -> Costmap:
    T = _check_unit("traversability", T)
    cost = np.where(T < tau, IMPASSABLE, 1.0 + k * (1.0 - T))
    return Costmap(spec, cost, provenance)


def step_heights(heights) -> np.ndarray:
    """Largest absolute height difference to any 8-neighbour."""
    h = np.asarray(heights, dtype=float)
    padded = np.pad(h, 1, mode="edge")
    H, W = h.shape
    out = np.zeros_like(h)
    for dr, dc in _NEIGHBOURS:
        out = np.maximum(out, np.abs(padded[1 + dr:1 + dr + H, 1 + dc:1 + dc + W] - h))
    return out


def elevation_costmap(heights, spec: GridSpec, k_e: float = SLOPE_GAIN, s0: float = SLOPE_FREE,
                      h_max: float = MAX_STEP) -> Costmap:
    """Slope-penalised cost; cells with a step higher than ``h_max`` to a neighbour are impassable."""
    h = np.asarray(heights, dtype=float)
    if h.shape != spec.shape:
        raise InputError(f"height grid {h.shape} does not match spec {spec.shape}")
    if h.shape[0] > 1 and h.shape[1] > 1:
        gy, gx = np.gradient(h, spec.cell_size)
        slope = np.hypot(gx, gy)
    else:
        slope = np.zeros_like(h)
    cost = 1.0 + k_e * np.maximum(0.0, slope - s0)
    cost[step_heights(h) > h_max] = IMPASSABLE
    return Costmap(spec, cost, "elevation-only")


def elevation_from_scene(scene, spec: GridSpec, z_top: float = 10.0, tolerance: float = 1e-4,
                         max_steps: int = 256) -> np.ndarray:
    """Highest surface height per cell center, by a vertical march down the scene SDF."""
    from .synth import _trace_bound

    xy = spec.centers().reshape(-1, 2)
    z = np.full(len(xy), float(z_top))
    active = np.ones(len(xy), dtype=bool)
    for _ in range(max_steps):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        s = _trace_bound(scene, np.column_stack([xy[idx], z[idx]]))
        done = s < tolerance
        z[idx[~done]] -= s[~done]
        active[idx[done]] = False
    return z.reshape(spec.shape)


def semantic_costmap(semantic, spec: GridSpec, table: SemanticTable = DEFAULT_SEMANTICS,
                     k: float = COST_GAIN, tau: float = IMPASSABLE_BELOW) -> Costmap:
    return costmap_from_traversability(semantic_mask(semantic, table), spec, k, tau, "semantic-only")


def full_costmap(semantic, spec: GridSpec, robot_cell, t_model: float, table: SemanticTable = DEFAULT_SEMANTICS,
                 k: float = COST_GAIN, tau: float = IMPASSABLE_BELOW, variance: float = DISTANCE_VARIANCE,
                 mode: str = "blend") -> Costmap:
    """Semantic mask refined by the model's traversability around the robot."""
    T = pixel_traversability(semantic_mask(semantic, table), gaussian_weight(spec, robot_cell, variance),
                             t_model, mode)
    return costmap_from_traversability(T, spec, k, tau, "full")


def _moves(passable, r, c):
    """8-connected moves; a diagonal is blocked when either side cell is impassable."""
    H, W = passable.shape
    for dr, dc in _NEIGHBOURS:
        nr, nc = r + dr, c + dc
        if not (0 <= nr < H and 0 <= nc < W) or not passable[nr, nc]:
            continue
        if dr and dc:
            if not (passable[r, nc] and passable[nr, c]):
                continue
            yield nr, nc, math.sqrt(2.0)
        else:
            yield nr, nc, 1.0


def step_cost(cost, a, b) -> float:
    length = math.sqrt(2.0) if (a[0] != b[0] and a[1] != b[1]) else 1.0
    return length * (cost[a] + cost[b]) / 2.0


def path_cost(costmap: Costmap, cells) -> float:
    """Accumulated step cost along a cell sequence, summed from the start."""
    total = 0.0
    for a, b in zip(cells[:-1], cells[1:]):
        total += step_cost(costmap.cost, tuple(a), tuple(b))
    return total


def _check_endpoint(costmap, cell, name):
    cell = (int(cell[0]), int(cell[1]))
    if not costmap.spec.contains(cell):
        raise InputError(f"{name} {cell} lies outside the grid")
    if not np.isfinite(costmap.cost[cell]):
        raise InputError(f"{name} {cell} is impassable")
    return cell


def a_star(costmap: Costmap, start, goal):
    """Cost-optimal 8-connected path or :data:`NO_PATH`.

    Heuristic is the Euclidean cell distance times the smallest finite cost,
    which never overestimates. Ties break on ``(f, h, row-major index)``.
    """
    start = _check_endpoint(costmap, start, "start")
    goal = _check_endpoint(costmap, goal, "goal")
    cost = costmap.cost
    passable = np.isfinite(cost)
    W = costmap.spec.width
    c_min = float(cost[passable].min())

    def h(cell):
        return math.hypot(cell[0] - goal[0], cell[1] - goal[1]) * c_min

    g = {start: 0.0}
    parent = {start: None}
    closed = set()
    h0 = h(start)
    heap = [(h0, h0, start[0] * W + start[1], start)]
    while heap:
        _, _, _, cell = heapq.heappop(heap)
        if cell in closed:
            continue
        if cell == goal:
            cells = []
            while cell is not None:
                cells.append(cell)
                cell = parent[cell]
            cells.reverse()
            return Path(tuple(cells), g[goal])
        closed.add(cell)
        r, c = cell
        base = g[cell]
        for nr, nc, length in _moves(passable, r, c):
            nxt = (nr, nc)
            if nxt in closed:
                continue
            ng = base + length * (cost[r, c] + cost[nr, nc]) / 2.0
            if ng < g.get(nxt, math.inf):
                g[nxt] = ng
                parent[nxt] = cell
                hn = h(nxt)
                heapq.heappush(heap, (ng + hn, hn, nr * W + nc, nxt))
    return NO_PATH


def grid_graph(costmap: Costmap):
    """Sparse directed adjacency matrix of the A* step model (for graph-library oracles)."""
    from scipy.sparse import csr_matrix

    cost = costmap.cost
    passable = np.isfinite(cost)
    H, W = cost.shape
    rows, cols, vals = [], [], []
    for r in range(H):
        for c in range(W):
            if not passable[r, c]:
                continue
            for nr, nc, length in _moves(passable, r, c):
                rows.append(r * W + c)
                cols.append(nr * W + nc)
                vals.append(length * (cost[r, c] + cost[nr, nc]) / 2.0)
    return csr_matrix((vals, (rows, cols)), shape=(H * W, H * W))


def field_axes(spec: GridSpec, z_range, nz: int):
    """Query-grid axes whose x/y samples sit on the planner cell centers."""
    return spec.x_centers(), spec.y_centers(), np.linspace(z_range[0], z_range[1], nz)


def project_field_to_grids(grid, spec: GridSpec, null_id: int = DEFAULT_SEMANTICS.null_id,
                           ground_level: float = 0.0):
    """Planner grids from a dense field prediction.

    ``grid`` provides ``xs, ys, zs, sdf (nx, ny, nz)`` and ``semantic_logits``.
    Elevation is the highest ``z`` with ``sdf <= 0``. The semantic class is the
    non-NULL argmax at that same sample, the near-surface sample just inside
    the surface; samples above it are free space or unobserved. Columns
    without an occupied sample get NULL and ``ground_level``.
    """
    xs, ys, zs = (np.asarray(a, dtype=float) for a in (grid.xs, grid.ys, grid.zs))
    ix = np.clip(np.searchsorted(xs, spec.x_centers() - 1e-9), 0, len(xs) - 1)
    iy = np.clip(np.searchsorted(ys, spec.y_centers() - 1e-9), 0, len(ys) - 1)
    # Snap to the nearest sample per cell center.
    for arr, axis, centers in ((ix, xs, spec.x_centers()), (iy, ys, spec.y_centers())):
        left = np.clip(arr - 1, 0, len(axis) - 1)
        closer = np.abs(axis[left] - centers) <= np.abs(axis[arr] - centers)
        arr[closer] = left[closer]
    sdf = np.asarray(grid.sdf)[ix][:, iy].transpose(1, 0, 2)  # (height, width, nz)
    logits = np.asarray(grid.semantic_logits)[ix][:, iy].transpose(1, 0, 2, 3)
    nz = len(zs)
    occupied = sdf <= 0
    has = occupied.any(axis=2)
    top_occ = nz - 1 - np.argmax(occupied[..., ::-1], axis=2)
    elevation = np.where(has, zs[top_occ], ground_level)
    chosen = np.take_along_axis(logits, top_occ[..., None, None], axis=2)[:, :, 0, :]
    chosen = np.delete(chosen, null_id, axis=-1)
    semantic = np.where(has, np.argmax(chosen, axis=-1), null_id).astype(np.int64)
    return semantic, elevation
