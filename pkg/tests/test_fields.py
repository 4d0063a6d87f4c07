import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pedsim.fields import (
    UNREACHABLE,
    DensityStamper,
    compute_density_field,
    compute_obstacle_field,
    compute_path_field,
    density_kernel,
    val,
)

from helpers import spec_from_rows
from oracles import density_direct, graph_distances, obstacle_distances

SQRT2 = math.sqrt(2.0)


def test_one_step_distances():
    spec = spec_from_rows(["...", ".D1.", "..."])
    f = compute_path_field(spec, 1)
    assert val(f, (1, 1)) == 0.0
    for c in [(0, 1), (2, 1), (1, 0), (1, 2)]:
        assert val(f, c) == 1.0
    for c in [(0, 0), (2, 0), (0, 2), (2, 2)]:
        assert val(f, c) == pytest.approx(SQRT2)


def test_corner_destination_diagonal():
    rows = ["D1...."] + ["....."] * 4
    f = compute_path_field(spec_from_rows(rows), 1)
    assert val(f, (4, 4)) == pytest.approx(4 * SQRT2)
    oracle = graph_distances(np.ones((5, 5), bool), [(0, 0)])
    assert np.allclose(f.values, oracle, atol=1e-9)


def test_wall_makes_unreachable():
    f = compute_path_field(spec_from_rows(["..#D1", "..#."]), 1)
    assert val(f, (0, 0)) == UNREACHABLE
    assert val(f, (3, 1)) == 1.0


def test_enclosed_destination_warns(caplog):
    f = compute_path_field(spec_from_rows(["...#D1"]), 1)
    assert "enclosed" in caplog.text
    assert math.isinf(val(f, (0, 0)))


def test_no_corner_cutting():
    # the diagonal between (0,1) and (1,0) passes the obstacle at (0,0)
    f = compute_path_field(spec_from_rows(["#D1", ".."]), 1)
    assert val(f, (0, 1)) == pytest.approx(2.0)


def test_val_out_of_bounds():
    f = compute_path_field(spec_from_rows(["..D1"]), 1)
    with pytest.raises(IndexError):
        val(f, (3, 0))


def test_obstacle_field_examples():
    f = compute_obstacle_field(spec_from_rows([".......", "...#...", ".......", "...D1..."]))
    assert val(f, (3, 1)) == 0.0
    assert val(f, (3, 2)) == 1.0
    room = compute_obstacle_field(spec_from_rows(["......."] * 6 + ["...D1..."]))
    assert val(room, (3, 3)) == 4.0
    assert val(room, (0, 3)) == 1.0


def test_periodic_path_field_is_monotone_across_the_seam():
    rows = ["######", ".....D1", "######"]
    f = compute_path_field(spec_from_rows(rows, "boundary_mode = periodic-x"), 1)
    row = f.values[1]
    assert all(a > b for a, b in zip(row, row[1:]))
    assert row[-1] == pytest.approx(6.0)  # one full period to the next copy
    # looking east from the last column sees the next period continuing downhill
    assert f.halo[2, -1] == pytest.approx(5.0)


def test_density_examples():
    f = compute_density_field([(3, 3)], 1.2, 7, 7)
    assert val(f, (3, 3)) == 1.0
    assert val(f, (5, 3)) == 0.25
    assert val(f, (0, 0)) == 0.0  # beyond R
    two = compute_density_field([(1, 2), (3, 2)], 1.2, 5, 5)
    assert val(two, (2, 2)) == 2.0


def test_empty_density():
    f = compute_density_field([], 1.2, 4, 3)
    assert val(f, (1, 1)) == 0.0


def test_kernel_radius():
    k = density_kernel(1.2)
    assert k.shape == (7, 7)
    assert k[3, 3] == 1.0 and k[3, 6] == pytest.approx(1 / 9)
    assert k[0, 0] == 0.0  # sqrt(18) cells is beyond 3


# --- properties -----------------------------------------------------------------

@st.composite
def grids(draw, max_side=20):
    w = draw(st.integers(1, max_side))
    h = draw(st.integers(1, max_side))
    p = draw(st.floats(0.0, 0.4))
    seed = draw(st.integers(0, 2**31))
    rng = np.random.default_rng(seed)
    walk = rng.random((h, w)) >= p
    free = list(zip(*np.nonzero(walk)))
    if not free:
        walk[0, 0] = True
        free = [(0, 0)]
    k = draw(st.integers(1, min(3, len(free))))
    picks = rng.choice(len(free), size=k, replace=False)
    dest = [(int(free[i][1]), int(free[i][0])) for i in picks]
    return walk, dest


def _rows(walk, dest):
    out = []
    for y, row in enumerate(walk):
        out.append("".join("D1" if (x, y) in dest else ("." if ok else "#") for x, ok in enumerate(row)))
    return out


@settings(max_examples=200, deadline=None)
@given(grids())
def test_path_field_matches_graph_oracle(case):
    walk, dest = case
    spec = spec_from_rows(_rows(walk, dest))
    got = compute_path_field(spec, 1).values
    want = graph_distances(walk, dest)
    assert np.array_equal(np.isinf(got), np.isinf(want))
    fin = np.isfinite(want)
    assert np.allclose(got[fin], want[fin], atol=1e-9, rtol=0)
    # zero exactly on the destination
    assert {(int(x), int(y)) for y, x in zip(*np.nonzero(got == 0))} == set(dest)


@settings(max_examples=100, deadline=None)
@given(grids(12))
def test_obstacle_field_matches_closed_form(case):
    walk, dest = case
    spec = spec_from_rows(_rows(walk, dest))
    got = compute_obstacle_field(spec).values
    assert np.allclose(got, obstacle_distances(walk), atol=1e-9, rtol=0)
    assert np.all((got == 0) == ~walk)


@settings(max_examples=100, deadline=None)
@given(grids())
def test_path_field_neighbour_difference(case):
    walk, dest = case
    f = compute_path_field(spec_from_rows(_rows(walk, dest)), 1).values
    h, w = f.shape
    for y in range(h):
        for x in range(w):
            if not np.isfinite(f[y, x]):
                continue
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    nx, ny = x + dx, y + dy
                    if 0 <= nx < w and 0 <= ny < h and np.isfinite(f[ny, nx]):
                        # reachable neighbours connected by a legal step differ by at most sqrt(2)
                        legal = walk[ny, nx] and (not (dx and dy) or (walk[y, nx] and walk[ny, x]))
                        if legal:
                            assert abs(f[y, x] - f[ny, nx]) <= SQRT2 + 1e-9


positions_st = st.lists(st.tuples(st.integers(0, 11), st.integers(0, 7)), max_size=40)


@settings(max_examples=80, deadline=None)
@given(positions_st, st.sampled_from([0.4, 0.8, 1.2, 2.0]), st.booleans())
def test_density_matches_direct_sum(positions, radius, periodic):
    w, h = 12, 8
    stamper = DensityStamper(w, h, radius, periodic)
    want = density_direct(positions, radius, w, h, periodic=periodic)
    counts = np.zeros((h, w))
    for x, y in positions:
        counts[y, x] += 1
    assert np.allclose(stamper.from_counts(counts), want, atol=1e-12)
    assert np.allclose(stamper.values(positions), want, atol=1e-12)
    if periodic or not positions:
        return
    # total mass: each pedestrian contributes its whole kernel minus the part off the grid
    k = stamper.kernel
    r = stamper.r
    mass = 0.0
    for x, y in positions:
        for dy in range(-r, r + 1):
            for dx in range(-r, r + 1):
                if 0 <= x + dx < w and 0 <= y + dy < h:
                    mass += k[dy + r, dx + r]
    assert want.sum() == pytest.approx(mass)


@settings(max_examples=40, deadline=None)
@given(positions_st)
def test_density_rebuild_is_pure(positions):
    a = compute_density_field(positions, 1.2, 12, 8).values
    b = compute_density_field(positions, 1.2, 12, 8).values
    assert np.array_equal(a, b)
    assert np.all(a >= 0)
    for x, y in positions:
        assert a[y, x] >= 1.0
