from __future__ import annotations

import numpy as np
import pytest

from harvestkit import GridError, build_grid


def test_state_counts():
    assert build_grid(0.1, 10.0, 1).n_states == 101
    assert build_grid(0.1, 5.0, 2).n_states == 51**2


def test_non_integral_spacing_rejected():
    with pytest.raises(GridError):
        build_grid(0.3, 10.0, 1)


def test_state_count_cap():
    with pytest.raises(GridError):
        build_grid(0.01, 10.0, 3)  # 1001^3 states
    build_grid(0.01, 10.0, 3, max_states=2 * 10**9)


def test_index_round_trip_is_identity():
    grid = build_grid(0.5, 2.0, 2)
    for flat in range(grid.n_states):
        assert grid.flat_index(grid.multi_index(flat)) == flat
    # coordinates follow multi-index * h
    assert grid.state(grid.flat_index((1, 3))) == pytest.approx([0.5, 1.5])


def test_points_flat_order():
    grid = build_grid(0.5, 1.0, 2)
    pts = grid.points()
    for flat in range(grid.n_states):
        assert pts[flat] == pytest.approx(grid.state(flat))


def test_flat_of_state():
    grid = build_grid(0.1, 10.0, 1)
    assert grid.flat_of_state([2.0]) == 20
    with pytest.raises(GridError):
        grid.flat_of_state([2.05])


def test_nearest_flat_clamps():
    grid = build_grid(0.1, 1.0, 2)
    flats = grid.nearest_flat(np.array([[0.26, -0.3], [5.0, 0.51]]))
    assert grid.state(int(flats[0])) == pytest.approx([0.3, 0.0])
    assert grid.state(int(flats[1])) == pytest.approx([1.0, 0.5])


def test_bad_geometry_rejected():
    with pytest.raises(GridError):
        build_grid(-0.1, 1.0, 1)
    with pytest.raises(GridError):
        build_grid(0.1, 1.0, 0)
