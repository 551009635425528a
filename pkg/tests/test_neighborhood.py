import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crowdsim.neighborhood import (
    GridTooCoarse,
    SpatialGrid,
    brute_force_within,
    candidate_pairs_grid,
    cell_of,
    neighbors_within,
    rebuild,
)


def test_empty_grid_returns_nothing():
    grid = rebuild([], 5.0)
    assert len(grid) == 0
    assert neighbors_within(grid, (0.0, 0.0), 5.0) == []


def test_close_pair_found_and_self_excluded():
    grid = rebuild([(0, (0.0, 0.0)), (1, (1.0, 0.0))], 5.0)
    assert neighbors_within(grid, (0.0, 0.0), 2.0, exclude_id=0) == [1]
    assert neighbors_within(grid, (0.0, 0.0), 2.0) == [0, 1]


def test_radius_boundary_is_exclusive():
    grid = rebuild([(0, (0.0, 0.0)), (1, (1.0, 0.0))], 5.0)
    assert neighbors_within(grid, (0.0, 0.0), 1.0, exclude_id=0) == []
    assert neighbors_within(grid, (0.0, 0.0), np.nextafter(1.0, 2.0), exclude_id=0) == [1]
    assert neighbors_within(grid, (0.0, 0.0), 0.0) == []


def test_cell_boundary_uses_floor():
    assert cell_of(5.0, -0.0, 5.0) == (1, 0)
    assert cell_of(-1e-12, 4.999, 5.0) == (-1, 0)
    grid = rebuild([(7, (5.0, 0.0))], 5.0)
    assert grid.cells == {(1, 0): [7]}


def test_radius_larger_than_cell_is_rejected():
    grid = rebuild([(0, (0.0, 0.0))], 2.0)
    with pytest.raises(GridTooCoarse):
        neighbors_within(grid, (0.0, 0.0), 2.5)


def test_rebuild_is_idempotent():
    pts = [(i, (float(i % 7) * 1.3, float(i // 7) * 0.9)) for i in range(40)]
    a, b = rebuild(pts, 3.0), rebuild(list(reversed(pts)), 3.0)
    assert a == b and a == rebuild(pts, 3.0)


@settings(max_examples=150, deadline=None)
@given(
    pts=st.lists(st.tuples(st.floats(-30, 30), st.floats(-30, 30)), max_size=80),
    cell=st.floats(0.5, 8.0),
    frac=st.floats(0.0, 1.0),
    center=st.tuples(st.floats(-35, 35), st.floats(-35, 35)),
)
def test_grid_query_matches_brute_force(pts, cell, frac, center):
    items = list(enumerate(pts))
    grid = SpatialGrid.rebuild(items, cell)
    radius = cell * frac
    assert grid.neighbors_within(center, radius) == brute_force_within(items, center, radius)


@settings(max_examples=150, deadline=None)
@given(pts=st.lists(st.tuples(st.floats(-60, 60), st.floats(-60, 60)), min_size=2, max_size=120),
       cell=st.floats(0.5, 10.0))
def test_candidate_pairs_cover_every_close_pair(pts, cell):
    pos = np.array(pts, dtype=float)
    i, j = candidate_pairs_grid(pos, cell)
    assert np.all(i < j)
    got = set(zip(i.tolist(), j.tolist()))
    assert len(got) == len(i)
    d = np.sqrt(((pos[:, None, :] - pos[None, :, :]) ** 2).sum(-1))
    close = {(a, b) for a, b in zip(*np.nonzero(d < cell)) if a < b}
    assert close <= got


def test_candidate_pairs_sparse_layout():
    # far-flung points force the sorted-key lookup instead of the dense table
    pos = np.array([[0.0, 0.0], [0.5, 0.2], [1e5, 1e5], [1e5 + 0.3, 1e5]])
    i, j = candidate_pairs_grid(pos, 1.0)
    assert sorted(zip(i.tolist(), j.tolist())) == [(0, 1), (2, 3)]
