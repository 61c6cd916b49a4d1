"""Uniform Cartesian grid on the bounding box: node classification and
grid-edge intersection records.

Nodes are stored as (M+1, M+1) arrays indexed [j, i] (row-major over
i + j*(M+1) when flattened). A node is interior iff phi_ls <= 1e-13 and
irregular iff at least one of its four axis neighbors lies on the opposite
side of Γ. Every sign-change edge yields one intersection record on each of
its two endpoint nodes (the decoupled correction strategy), so corrections
later accumulate with strictly per-node writes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import DEFAULT_CHUNK_SIZE, KernelSpec, SerialBackend
from .errors import GridError
from .geometry import ON_CURVE_TOL, _edge_intersections_batch

ARM_EAST, ARM_WEST, ARM_NORTH, ARM_SOUTH = 0, 1, 2, 3


class CartesianGrid:
    """Square box [xlo,xhi]x[ylo,yhi] with M intervals per direction."""

    def __init__(self, box, m):
        xlo, xhi, ylo, yhi = (float(v) for v in box)
        width = xhi - xlo
        height = yhi - ylo
        if width <= 0 or height <= 0:
            raise GridError("box must have positive extent")
        if abs(width - height) > 1e-14 * max(1.0, width):
            raise GridError("box must be square")
        m = int(m)
        if m < 16 or (m & (m - 1)) != 0:
            raise GridError("M must be a power of two and >= 16")
        self.box = (xlo, xhi, ylo, yhi)
        self.m = m
        self.h = width / m
        self.x = xlo + self.h * np.arange(m + 1)
        self.y = ylo + self.h * np.arange(m + 1)
        # X[j, i] = x[i], Y[j, i] = y[j]
        self.X, self.Y = np.meshgrid(self.x, self.y)

    @property
    def n_nodes(self):
        return (self.m + 1) ** 2

    def flat_index(self, i, j):
        return np.asarray(i) + np.asarray(j) * (self.m + 1)


def neighbors(grid, i, j):
    """East/west/north/south neighbor indices of an interior-of-box node."""
    if not (0 < i < grid.m and 0 < j < grid.m):
        raise IndexError(f"node ({i},{j}) has no full neighbor set on an M={grid.m} grid")
    return ((i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1))


@dataclass
class NodeClassification:
    level: np.ndarray      # phi_ls at every node, shape (M+1, M+1)
    interior: np.ndarray   # bool, interior side of Γ
    irregular: np.ndarray  # bool, has an opposite-side axis neighbor
    n_interior: int
    n_irregular: int


class IntersectionRecords:
    """Struct-of-arrays of per-node arm crossings, sorted by owning node.

    d is the signed offset (neighbor coordinate - crossing coordinate) along
    the arm axis, the distance that multiplies [u_x]/[u_xx] (or the y pair)
    in the Taylor correction at the owner's stencil.
    """

    def __init__(self, owner_i, owner_j, owner_flat, arm, x, y, theta, d,
                 owner_interior, m):
        order = np.lexsort((arm, owner_flat))
        self.owner_i = owner_i[order]
        self.owner_j = owner_j[order]
        self.owner_flat = owner_flat[order]
        self.arm = arm[order]
        self.x = x[order]
        self.y = y[order]
        self.theta = theta[order]
        self.d = d[order]
        self.owner_interior = owner_interior[order]
        self.axis = np.where(self.arm <= ARM_WEST, 0, 1)
        self.n = self.owner_flat.size
        # CSR-style grouping for deterministic per-node accumulation
        if self.n:
            first = np.ones(self.n, dtype=bool)
            first[1:] = self.owner_flat[1:] != self.owner_flat[:-1]
            self.group_starts = np.nonzero(first)[0]
            self.group_owners = self.owner_flat[self.group_starts]
        else:
            self.group_starts = np.zeros(0, dtype=int)
            self.group_owners = np.zeros(0, dtype=int)


@dataclass
class GridGeometry:
    grid: CartesianGrid
    classification: NodeClassification
    records: IntersectionRecords
    curve: object


def _clearance(curve, box, n_samples=4096):
    theta = 2.0 * np.pi * np.arange(n_samples) / n_samples
    pts = curve.point(theta)
    xlo, xhi, ylo, yhi = box
    margins = np.stack(
        [pts[:, 0] - xlo, xhi - pts[:, 0], pts[:, 1] - ylo, yhi - pts[:, 1]]
    )
    return margins.min()


def _classify(curve, grid, backend, chunk_size):
    level = np.empty(grid.n_nodes)
    xs = grid.X.ravel()
    ys = grid.Y.ravel()

    def classify_chunk(start, stop):
        level[start:stop] = curve.implicit(xs[start:stop], ys[start:stop])

    backend.dispatch(
        KernelSpec("classify-nodes", grid.n_nodes, chunk_size), classify_chunk
    )
    level = level.reshape(grid.m + 1, grid.m + 1)
    interior = level <= ON_CURVE_TOL

    edge_ring = np.zeros_like(interior)
    edge_ring[0, :] = edge_ring[-1, :] = True
    edge_ring[:, 0] = edge_ring[:, -1] = True
    if np.any(interior & edge_ring):
        raise GridError("Γ too close to ∂B: box-edge node classified interior")

    diff_h = interior[:, :-1] != interior[:, 1:]   # edge (i,j)-(i+1,j)
    diff_v = interior[:-1, :] != interior[1:, :]   # edge (i,j)-(i,j+1)
    irregular = np.zeros_like(interior)
    irregular[:, :-1] |= diff_h
    irregular[:, 1:] |= diff_h
    irregular[:-1, :] |= diff_v
    irregular[1:, :] |= diff_v
    return NodeClassification(
        level=level,
        interior=interior,
        irregular=irregular,
        n_interior=int(interior.sum()),
        n_irregular=int(irregular.sum()),
    ), diff_h, diff_v


def _check_single_crossing(curve, a, b):
    """Reject edges the curve crosses more than once at this resolution."""
    if a.shape[0] == 0:
        return
    ts = np.linspace(0.0, 1.0, 9)
    sides = []
    for t in ts:
        p = a + t * (b - a)
        sides.append(curve.implicit(p[:, 0], p[:, 1]) <= ON_CURVE_TOL)
    sides = np.stack(sides)
    changes = (sides[1:] != sides[:-1]).sum(axis=0)
    if np.any(changes > 1):
        raise GridError(
            "a grid edge is crossed by Γ more than once; the boundary is "
            "under-resolved at this M — increase M"
        )


def build_grid(box, m, curve, backend=None, chunk_size=DEFAULT_CHUNK_SIZE * 64):
    """Grid + classification + intersection records for (box, M, curve)."""
    backend = backend if backend is not None else SerialBackend()
    grid = CartesianGrid(box, m)

    clearance = _clearance(curve, grid.box)
    if clearance < 2.0 * grid.h:
        raise GridError(
            f"Γ too close to ∂B: clearance {clearance:.4g} < 2h = {2 * grid.h:.4g}"
        )

    classification, diff_h, diff_v = _classify(curve, grid, backend, chunk_size)

    hj, hi = np.nonzero(diff_h)
    vj, vi = np.nonzero(diff_v)
    a_h = np.stack([grid.x[hi], grid.y[hj]], axis=-1)
    b_h = np.stack([grid.x[hi + 1], grid.y[hj]], axis=-1)
    a_v = np.stack([grid.x[vi], grid.y[vj]], axis=-1)
    b_v = np.stack([grid.x[vi], grid.y[vj + 1]], axis=-1)
    a_all = np.concatenate([a_h, a_v])
    b_all = np.concatenate([b_h, b_v])
    n_edges = a_all.shape[0]

    _check_single_crossing(curve, a_all, b_all)

    t_all = np.empty(n_edges)
    theta_all = np.empty(n_edges)

    def intersect_chunk(start, stop):
        t, theta = _edge_intersections_batch(curve, a_all[start:stop], b_all[start:stop])
        t_all[start:stop] = t
        theta_all[start:stop] = theta

    backend.dispatch(
        KernelSpec("edge-intersections", n_edges, max(chunk_size // 64, 64)),
        intersect_chunk,
    )

    cross = a_all + t_all[:, None] * (b_all - a_all)
    nh = hi.size

    # two records per edge: each endpoint owns the correction for its own arm
    owner_i = np.concatenate([hi, hi + 1, vi, vi])
    owner_j = np.concatenate([hj, hj, vj, vj + 1])
    arm = np.concatenate(
        [
            np.full(nh, ARM_EAST),
            np.full(nh, ARM_WEST),
            np.full(vi.size, ARM_NORTH),
            np.full(vi.size, ARM_SOUTH),
        ]
    ).astype(np.int8)
    rec_x = np.concatenate([cross[:nh, 0]] * 2 + [cross[nh:, 0]] * 2)
    rec_y = np.concatenate([cross[:nh, 1]] * 2 + [cross[nh:, 1]] * 2)
    rec_theta = np.concatenate([theta_all[:nh]] * 2 + [theta_all[nh:]] * 2)
    # signed neighbor-minus-crossing offsets along the arm axis
    d = np.concatenate(
        [
            grid.x[hi + 1] - cross[:nh, 0],
            grid.x[hi] - cross[:nh, 0],
            grid.y[vj + 1] - cross[nh:, 1],
            grid.y[vj] - cross[nh:, 1],
        ]
    )
    owner_flat = grid.flat_index(owner_i, owner_j)
    owner_interior = classification.interior.ravel()[owner_flat]

    records = IntersectionRecords(
        owner_i=owner_i,
        owner_j=owner_j,
        owner_flat=owner_flat,
        arm=arm,
        x=rec_x,
        y=rec_y,
        theta=rec_theta,
        d=d,
        owner_interior=owner_interior,
        m=m,
    )
    return GridGeometry(grid=grid, classification=classification, records=records,
                        curve=curve)
