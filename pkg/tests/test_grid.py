"""Grid construction, node classification, and intersection records."""

import numpy as np
import pytest

from kfbi import CircleCurve, GridError, StarCurve, build_grid, neighbors
from kfbi.grid import ARM_EAST, ARM_NORTH, ARM_SOUTH, ARM_WEST, CartesianGrid

BOX = (-1.5, 1.5, -1.5, 1.5)


def test_grid_layout():
    grid = CartesianGrid(BOX, 16)
    assert grid.h == pytest.approx(3.0 / 16)
    assert grid.x[0] == -1.5 and grid.x[-1] == 1.5
    assert grid.X.shape == (17, 17)
    # X varies along i (columns), Y along j (rows)
    assert np.allclose(grid.X[3, :], grid.x)
    assert np.allclose(grid.Y[:, 5], grid.y)
    i, j = 4, 11
    assert grid.flat_index(i, j) == i + j * 17
    assert neighbors(grid, i, j) == ((i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1))
    with pytest.raises(IndexError):
        neighbors(grid, 0, 5)
    with pytest.raises(IndexError):
        neighbors(grid, 5, 16)


def test_grid_validation():
    with pytest.raises(GridError):
        CartesianGrid((-1.0, 1.0, -1.0, 2.0), 16)  # not square
    with pytest.raises(GridError):
        CartesianGrid((-1.0, -2.0, -1.0, -2.0), 16)  # empty extent
    with pytest.raises(GridError):
        CartesianGrid(BOX, 24)  # not a power of two
    with pytest.raises(GridError):
        CartesianGrid(BOX, 8)  # too coarse


def _brute_force_classification(curve, grid):
    """Independent double-loop oracle for interior/irregular flags."""
    n = grid.m + 1
    inside = np.zeros((n, n), dtype=bool)
    for j in range(n):
        for i in range(n):
            inside[j, i] = curve.implicit(grid.x[i], grid.y[j]) <= 1e-13
    irregular = np.zeros((n, n), dtype=bool)
    for j in range(n):
        for i in range(n):
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                ii, jj = i + di, j + dj
                if 0 <= ii < n and 0 <= jj < n and inside[jj, ii] != inside[j, i]:
                    irregular[j, i] = True
    return inside, irregular


@pytest.mark.parametrize("m,curve", [(16, CircleCurve(0.8)), (32, CircleCurve(1.0))])
def test_classification_matches_brute_force(m, curve):
    geo = build_grid(BOX, m, curve)
    inside, irregular = _brute_force_classification(curve, geo.grid)
    assert np.array_equal(geo.classification.interior, inside)
    assert np.array_equal(geo.classification.irregular, irregular)
    assert geo.classification.n_interior == int(inside.sum())
    assert geo.classification.n_irregular == int(irregular.sum())
    assert np.allclose(
        geo.classification.level, curve.implicit(geo.grid.X, geo.grid.Y)
    )
    assert geo.curve is curve


@pytest.mark.parametrize("curve", [CircleCurve(1.0), StarCurve(1.0, c=0.2, lobes=3)])
def test_intersection_records(curve):
    geo = build_grid(BOX, 64, curve)
    rec = geo.records
    grid = geo.grid
    assert rec.n > 0

    # crossings lie on the curve and on the owning edge
    assert np.max(np.abs(curve.implicit(rec.x, rec.y))) < 1e-9
    p = curve.point(rec.theta)
    assert np.max(np.abs(p[:, 0] - rec.x)) < 1e-8
    assert np.max(np.abs(p[:, 1] - rec.y)) < 1e-8
    assert np.all(np.abs(rec.d) <= grid.h + 1e-12)

    # d is the signed neighbor-minus-crossing offset along the arm axis
    east = rec.arm == ARM_EAST
    west = rec.arm == ARM_WEST
    north = rec.arm == ARM_NORTH
    south = rec.arm == ARM_SOUTH
    assert np.all(rec.d[east] >= 0) and np.all(rec.d[west] <= 0)
    assert np.all(rec.d[north] >= 0) and np.all(rec.d[south] <= 0)
    assert east.sum() == west.sum()
    assert north.sum() == south.sum()
    own_x = grid.x[rec.owner_i]
    own_y = grid.y[rec.owner_j]
    assert np.allclose(rec.d[east], grid.x[rec.owner_i[east] + 1] - rec.x[east], atol=1e-12)
    assert np.allclose(rec.d[west], grid.x[rec.owner_i[west] - 1] - rec.x[west], atol=1e-12)
    assert np.allclose(rec.d[north], grid.y[rec.owner_j[north] + 1] - rec.y[north], atol=1e-12)
    assert np.allclose(rec.d[south], grid.y[rec.owner_j[south] - 1] - rec.y[south], atol=1e-12)
    assert np.all((rec.x[east] - own_x[east] >= -1e-12)
                  & (rec.x[east] - own_x[east] <= grid.h + 1e-12))
    assert np.all((own_x[west] - rec.x[west] >= -1e-12)
                  & (own_x[west] - rec.x[west] <= grid.h + 1e-12))
    assert np.allclose(rec.y[east | west], own_y[east | west], atol=1e-12)
    assert np.allclose(rec.x[north | south], own_x[north | south], atol=1e-12)

    # owner bookkeeping
    assert np.array_equal(rec.owner_flat, grid.flat_index(rec.owner_i, rec.owner_j))
    inside_flat = geo.classification.interior.ravel()
    assert np.array_equal(rec.owner_interior, inside_flat[rec.owner_flat])
    irregular_flat = geo.classification.irregular.ravel()
    assert np.all(irregular_flat[rec.owner_flat])
    assert np.array_equal(rec.axis, np.where(rec.arm <= ARM_WEST, 0, 1))

    # CSR grouping covers every record exactly once, owners ascending
    assert rec.group_starts[0] == 0
    assert np.all(np.diff(rec.group_starts) > 0)
    assert np.all(np.diff(rec.group_owners) > 0)
    assert np.array_equal(np.unique(rec.owner_flat), rec.group_owners)
    assert np.all(np.diff(rec.owner_flat) >= 0)


def test_clearance_guard():
    with pytest.raises(GridError, match="too close"):
        build_grid((-1.2, 1.2, -1.2, 1.2), 16, CircleCurve(1.0))
    # generous clearance passes
    build_grid(BOX, 16, CircleCurve(0.8))


def test_box_edge_interior_guard():
    class EverywhereInside(CircleCurve):
        def implicit(self, x, y):
            return np.zeros_like(np.asarray(x, dtype=float)) - 1.0

    with pytest.raises(GridError, match="too close"):
        build_grid(BOX, 16, EverywhereInside(0.5))


def test_under_resolved_boundary_guard():
    # a many-lobed star wiggles in and out of single tangential grid edges
    wiggly = StarCurve(0.8, c=0.3, lobes=24)
    with pytest.raises(GridError, match="more than once"):
        build_grid(BOX, 16, wiggly)
    # the same boundary is fine once M resolves the lobes
    geo = build_grid(BOX, 256, wiggly)
    assert geo.records.n > 0
