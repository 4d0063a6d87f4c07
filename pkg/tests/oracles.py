"""Independent reference implementations used only by the tests."""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

SQRT2 = math.sqrt(2.0)


def graph_distances(walkable: np.ndarray, sources, corner_cutting: bool = False) -> np.ndarray:
    """Multi-source 8-connected distances via scipy's Dijkstra on an explicit graph."""
    h, w = walkable.shape
    rows, cols, costs = [], [], []
    for y in range(h):
        for x in range(w):
            if not walkable[y, x]:
                continue
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    if dx == dy == 0:
                        continue
                    nx, ny = x + dx, y + dy
                    if not (0 <= nx < w and 0 <= ny < h) or not walkable[ny, nx]:
                        continue
                    if dx and dy and not corner_cutting and not (walkable[y, nx] and walkable[ny, x]):
                        continue
                    rows.append(y * w + x)
                    cols.append(ny * w + nx)
                    costs.append(SQRT2 if dx and dy else 1.0)
    graph = coo_matrix((costs, (rows, cols)), shape=(h * w, h * w)).tocsr()
    idx = [y * w + x for x, y in sources]
    if not idx:
        return np.full((h, w), np.inf)
    dist = dijkstra(graph, directed=True, indices=idx, min_only=True)
    return dist.reshape(h, w)


def octile(dx: int, dy: int) -> float:
    a, b = abs(dx), abs(dy)
    return (max(a, b) - min(a, b)) + SQRT2 * min(a, b)


def obstacle_distances(walkable: np.ndarray) -> np.ndarray:
    """Closed-form distance to the nearest obstacle or to the ring of wall
    cells just outside the grid; with corner cutting allowed and nothing
    blocking, the 8-connected shortest path is the octile distance."""
    h, w = walkable.shape
    walls = [(x, y) for y in range(h) for x in range(w) if not walkable[y, x]]
    walls += [(x, -1) for x in range(-1, w + 1)] + [(x, h) for x in range(-1, w + 1)]
    walls += [(-1, y) for y in range(h)] + [(w, y) for y in range(h)]
    out = np.empty((h, w))
    for y in range(h):
        for x in range(w):
            out[y, x] = min(octile(x - wx, y - wy) for wx, wy in walls)
    return out


def hull_area_bruteforce(points) -> float:
    """Hull edges are the point pairs with every other point on one side."""
    pts = sorted(set(map(tuple, points)))
    if len(pts) < 3:
        return 0.0
    edges = []
    for p, q in itertools.permutations(pts, 2):
        ok = True
        for r in pts:
            cross = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
            if cross < -1e-12:
                ok = False
                break
        if ok:
            edges.append((p, q))
    if not edges:
        return 0.0
    # each hull edge, counter-clockwise, contributes p x q / 2; collinear
    # sub-edges along the same side add up to the full side
    total = 0.0
    for p, q in edges:
        # keep only edges with no third point strictly between p and q on the line,
        # so a side with collinear points is counted once through its pieces
        between = any(
            r not in (p, q)
            and abs((q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])) <= 1e-12
            and min(p[0], q[0]) <= r[0] <= max(p[0], q[0])
            and min(p[1], q[1]) <= r[1] <= max(p[1], q[1])
            for r in pts
        )
        if not between:
            total += p[0] * q[1] - q[0] * p[1]
    return abs(total) / 2.0


def density_direct(positions, radius_m: float, width: int, height: int, cell_side: float = 0.4,
                   periodic: bool = False) -> np.ndarray:
    """Sum every pedestrian's contribution cell by cell."""
    out = np.zeros((height, width))
    images = range(-3, 4) if periodic else (0,)
    for y in range(height):
        for x in range(width):
            v = 0.0
            for px, py in positions:
                for k in images:
                    dx = x - px + k * width
                    dy = y - py
                    d2 = dx * dx + dy * dy
                    if d2 == 0:
                        v += 1.0
                    elif math.sqrt(d2) * cell_side <= radius_m + 1e-9:
                        v += 1.0 / d2
            out[y, x] = v
    return out
