"""Static path/obstacle fields and the per-step density field."""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass

import numpy as np

from .scenario import CELL_SIDE, ScenarioSpec

log = logging.getLogger(__name__)

UNREACHABLE = math.inf
SQRT2 = math.sqrt(2.0)

# (dx, dy, cost)
_MOVES = (
    (1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0),
    (1, 1, SQRT2), (1, -1, SQRT2), (-1, 1, SQRT2), (-1, -1, SQRT2),
)


@dataclass
class FloorField:
    """A scalar grid indexed ``values[y, x]``.

    ``halo`` is the same field padded by one cell on every side. Out-of-grid
    halo cells hold the wrapped (periodic-x) or unrolled (path field) values
    the engine sees when it looks one step beyond the edge.
    """

    kind: str  # "path", "obstacle" or "density"
    values: np.ndarray
    halo: np.ndarray
    destination: int | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def val(field: FloorField, c) -> float:
    x, y = c
    h, w = field.values.shape
    if not (0 <= x < w and 0 <= y < h):
        raise IndexError(f"cell {c} outside {w}x{h} grid")
    return float(field.values[y, x])


def chessboard_distances(
    walkable: np.ndarray, sources, corner_cutting: bool = False
) -> np.ndarray:
    """Multi-source shortest paths on the 8-connected grid.

    Orthogonal steps cost 1, diagonal steps sqrt(2). Unless ``corner_cutting``
    is set, a diagonal step is only allowed when both orthogonal cells it
    passes between are walkable.
    """
    h, w = walkable.shape
    dist = np.full(h * w, UNREACHABLE)
    free = walkable.ravel().tolist()
    heap = []
    for x, y in sources:
        i = y * w + x
        if dist[i] != 0.0:
            dist[i] = 0.0
            heap.append((0.0, i))
    heapq.heapify(heap)
    d = dist.tolist()
    while heap:
        cost, i = heapq.heappop(heap)
        if cost > d[i]:
            continue
        y, x = divmod(i, w)
        for dx, dy, step in _MOVES:
            nx, ny = x + dx, y + dy
            if not (0 <= nx < w and 0 <= ny < h):
                continue
            j = ny * w + nx
            if not free[j]:
                continue
            if dx and dy and not corner_cutting:
                if not (free[y * w + nx] and free[ny * w + x]):
                    continue
            nc = cost + step
            if nc < d[j]:
                d[j] = nc
                heapq.heappush(heap, (nc, j))
    return np.array(d).reshape(h, w)


def _walkable_mask(spec: ScenarioSpec) -> np.ndarray:
    mask = np.ones((spec.height, spec.width), dtype=bool)
    for x, y in spec.obstacles:
        mask[y, x] = False
    return mask


def _open_halo(values: np.ndarray, fill: float) -> np.ndarray:
    return np.pad(values, 1, constant_values=fill)


def _wrap_halo(values: np.ndarray, fill: float) -> np.ndarray:
    halo = np.pad(values, ((0, 0), (1, 1)), mode="wrap")
    return np.pad(halo, ((1, 1), (0, 0)), constant_values=fill)


def compute_path_field(spec: ScenarioSpec, destination_id: int) -> FloorField:
    """Distance to the nearest cell of a destination, through walkable cells.

    In periodic-x scenarios the destination is treated as lying one period
    further along (east half of the map -> east, west half -> west), so the
    field is a monotone potential across the seam and never reaches zero.
    """
    dest = spec.destinations[destination_id]
    walkable = _walkable_mask(spec)
    h, w = walkable.shape
    if not spec.periodic:
        values = chessboard_distances(walkable, sorted(dest.cells))
        others = [c for c in spec.walkable_cells() if c not in dest.cells]
        if others and all(np.isinf(values[y, x]) for x, y in others):
            log.warning("destination %d is enclosed by obstacles; field unreachable", destination_id)
        return FloorField("path", values, _open_halo(values, UNREACHABLE), destination_id)

    tiled = np.tile(walkable, (1, 3))
    mean_x = sum(x for x, _ in dest.cells) / len(dest.cells)
    shift = 2 * w if mean_x >= w / 2 else 0
    sources = sorted((x + shift, y) for x, y in dest.cells)
    dist = chessboard_distances(tiled, sources)
    values = dist[:, w:2 * w].copy()
    halo = np.pad(dist[:, w - 1:2 * w + 1], ((1, 1), (0, 0)), constant_values=UNREACHABLE)
    return FloorField("path", values, halo, destination_id)


def compute_obstacle_field(spec: ScenarioSpec) -> FloorField:
    """Distance to the nearest obstacle or wall; the grid border counts as wall
    except across the seam of a periodic-x scenario."""
    walkable = _walkable_mask(spec)
    h, w = walkable.shape
    if spec.periodic:
        tiled = np.tile(walkable, (1, 3))
        padded = np.pad(tiled, ((1, 1), (0, 0)), constant_values=False)
        sources = [(x, y) for y, x in zip(*np.nonzero(~padded))]
        dist = chessboard_distances(np.ones_like(padded), sources, corner_cutting=True)
        values = dist[1:-1, w:2 * w].copy()
        return FloorField("obstacle", values, _wrap_halo(values, 0.0))
    padded = np.pad(walkable, 1, constant_values=False)
    sources = [(x, y) for y, x in zip(*np.nonzero(~padded))]
    dist = chessboard_distances(np.ones_like(padded), sources, corner_cutting=True)
    values = dist[1:-1, 1:-1].copy()
    return FloorField("obstacle", values, _open_halo(values, 0.0))


def density_kernel(radius_m: float, cell_side: float = CELL_SIDE) -> np.ndarray:
    """Per-pedestrian contribution: 1 on its own cell, 1/d^2 within radius."""
    r = int(math.floor(radius_m / cell_side + 1e-9))
    k = np.zeros((2 * r + 1, 2 * r + 1))
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            d2 = dx * dx + dy * dy
            if d2 == 0:
                k[dy + r, dx + r] = 1.0
            elif math.sqrt(d2) * cell_side <= radius_m + 1e-9:
                k[dy + r, dx + r] = 1.0 / d2
    return k


class DensityStamper:
    """Rebuilds the density field from occupancy counts each step.

    The field is the count grid convolved with ``density_kernel``; summation
    order is fixed, so identical inputs give bit-identical output.
    """

    def __init__(self, width: int, height: int, radius_m: float, periodic: bool = False,
                 cell_side: float = CELL_SIDE):
        self.width, self.height = width, height
        self.periodic = periodic
        self.kernel = density_kernel(radius_m, cell_side)
        self.r = self.kernel.shape[0] // 2
        self._taps = [
            (dy, dx, float(self.kernel[dy, dx]))
            for dy in range(self.kernel.shape[0])
            for dx in range(self.kernel.shape[1])
            if self.kernel[dy, dx] > 0
        ]

    def from_counts(self, counts: np.ndarray) -> np.ndarray:
        r = self.r
        h, w = counts.shape
        c = counts.astype(float)
        if self.periodic:
            # wrap enough times to cover kernels wider than the map
            reps = r // w + 1
            c = np.concatenate([c] * (2 * reps + 1), axis=1)[:, reps * w - r: reps * w + w + r]
            c = np.pad(c, ((r, r), (0, 0)))
        else:
            c = np.pad(c, r)
        out = np.zeros((h, w))
        # out[y, x] = sum_k counts[y - ky, x - kx] * K[ky, kx]
        for ky, kx, weight in self._taps:
            oy, ox = 2 * r - ky, 2 * r - kx
            out += weight * c[oy:oy + h, ox:ox + w]
        return out

    def stamp(self, positions) -> np.ndarray:
        """Same field as ``from_counts``, built by stamping one kernel per pedestrian."""
        r, h, w = self.r, self.height, self.width
        k = self.kernel
        side = 2 * r + 1
        buf = np.zeros((h + 2 * r, w + 2 * r))
        for x, y in positions:
            buf[y:y + side, x:x + side] += k
        if self.periodic:
            buf[:, r:2 * r] += buf[:, w + r:w + 2 * r]
            buf[:, w:w + r] += buf[:, :r]
        return buf[r:r + h, r:r + w].copy()

    def values(self, positions, counts=None) -> np.ndarray:
        """Density values; stamping for sparse crowds, convolution otherwise."""
        positions = list(positions)
        if len(positions) * 2 < len(self._taps) and (not self.periodic or self.width >= self.r):
            return self.stamp(positions)
        if counts is None:
            counts = np.zeros((self.height, self.width))
            for x, y in positions:
                counts[y, x] += 1
        return self.from_counts(counts)

    def halo(self, values: np.ndarray) -> np.ndarray:
        h, w = values.shape
        out = np.zeros((h + 2, w + 2))
        out[1:-1, 1:-1] = values
        if self.periodic:
            out[1:-1, 0] = values[:, -1]
            out[1:-1, -1] = values[:, 0]
        return out

    def field(self, positions) -> FloorField:
        values = self.values(positions)
        return FloorField("density", values, self.halo(values))


def compute_density_field(positions, R: float, width: int, height: int,
                          periodic: bool = False, cell_side: float = CELL_SIDE) -> FloorField:
    return DensityStamper(width, height, R, periodic, cell_side).field(positions)
