"""Interface problem on the box: jump relations on Γ, correction terms at
irregular nodes, and the corrected fast solve.

Given densities Φ = [u], Ψ = [u_n] (jumps taken as interior minus exterior
limit) and the one-sided source jump f_Γ, the first and second derivative
jumps follow from differentiating the interface relations along Γ and from
the PDE itself. With (τ1, τ2) the unit tangent:

    [u_x], [u_y]:   τ1[u_x] + τ2[u_y] = Φ_s,   τ2[u_x] − τ1[u_y] = Ψ
    second order:   τ1²[u_xx] + 2τ1τ2[u_xy] + τ2²[u_yy]
                        = Φ_ss − τ1'[u_x] − τ2'[u_y]
                    τ1τ2[u_xx] + (τ2²−τ1²)[u_xy] − τ1τ2[u_yy]
                        = Ψ_s − τ2'[u_x] + τ1'[u_y]
                    [u_xx] + [u_yy] = f_Γ + κΦ

The 2×2 matrix is orthogonal-symmetric (its own inverse); the 3×3 system has
determinant −1 for any unit tangent, so both are uniformly well conditioned.
Corrections restore O(h) local truncation error of the five-point stencil at
irregular nodes by Taylor-transporting the jumps from the arm crossing to the
neighbor node; accumulation is per-node over each node's own arm records.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .boxsolve import BoxSolver
from .engine import KernelSpec, SerialBackend
from .errors import GeometryError, GridError
from .geometry import control_points, differentiate_density

TRIG_INTERP_MIN_M = 32


def _trig_rows(query_theta, node_theta):
    """Periodic trigonometric interpolation rows (even node count).

    Row r is the cardinal kernel D(θ_r − θ_i) with
    D(x) = sin(mx/2)·cos(x/2) / (m·sin(x/2)), D(0) = 1,
    exact for trigonometric polynomials resolvable on m nodes.
    """
    m = node_theta.size
    x = query_theta[:, None] - node_theta[None, :]
    # wrap to (−π, π] so the small-angle branch is well defined
    x = np.mod(x + np.pi, 2.0 * np.pi) - np.pi
    small = np.abs(x) < 1e-12
    xs = np.where(small, 1.0, x)
    rows = np.sin(0.5 * m * xs) * np.cos(0.5 * xs) / (m * np.sin(0.5 * xs))
    return np.where(small, 1.0, rows)


def _cubic_rows(query_theta, node_theta):
    """Periodic cubic interpolation rows, one unit-response spline per node."""
    m = node_theta.size
    knots = np.append(node_theta, 2.0 * np.pi)
    q = np.mod(query_theta, 2.0 * np.pi)
    rows = np.empty((query_theta.size, m))
    for i in range(m):
        e = np.zeros(m + 1)
        e[i] = 1.0
        if i == 0:
            e[-1] = 1.0
        rows[:, i] = CubicSpline(knots, e, bc_type="periodic")(q)
    return rows


def interp_rows(query_theta, node_theta):
    query_theta = np.atleast_1d(np.asarray(query_theta, dtype=float))
    m = node_theta.size
    if m >= TRIG_INTERP_MIN_M and m % 2 == 0:
        return _trig_rows(query_theta, node_theta)
    return _cubic_rows(query_theta, node_theta)


@dataclass
class InterfaceData:
    """Data of one unified interface solve.

    F is the grid source field (zero at exterior nodes in the boundary
    integral setting; a general two-sided source is accepted for testing
    against piecewise-manufactured fields, with f_Γ the interior-minus-
    exterior source jump on Γ).
    """

    kappa: complex
    F: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    f_gamma: np.ndarray


@dataclass
class JumpSet:
    u: np.ndarray
    ux: np.ndarray
    uy: np.ndarray
    uxx: np.ndarray
    uxy: np.ndarray
    uyy: np.ndarray

    def as_matrix(self):
        return np.stack([self.u, self.ux, self.uy, self.uxx, self.uxy, self.uyy], axis=1)


MIN_CONTROL_SPACING = 1.8  # minimum control-point arc spacing, in grid units


def default_control_count(geometry):
    """Largest even control count (≤ grid M) keeping the minimum arc-length
    spacing at or above MIN_CONTROL_SPACING·h.

    The corrections live on grid arms, so the grid only carries density
    modes of arc wavelength ≳ 2h. Controls packed tighter than ~h (which
    equispaced-θ placement produces where the parameterization is slow, e.g.
    concave necks) can hold oscillations the grid cannot see at all; those
    become near-null directions of the trace map and stall the Richardson
    iteration. Spacing ≥ 1.8h keeps the finest control mode at wavelength
    3.6h, comfortably representable.
    """
    theta = np.linspace(0.0, 2.0 * np.pi, 4096, endpoint=False)
    speed_min = float(np.min(np.hypot(*geometry.curve.velocity(theta).T)))
    cap = speed_min * 2.0 * np.pi / (MIN_CONTROL_SPACING * geometry.grid.h)
    return max(8, min(geometry.grid.m, 2 * int(cap / 2.0)))


class InterfaceWorkspace:
    """Geometry-dependent precomputation shared by every interface solve.

    Holds the control point set, the interpolation matrix from control points
    to intersection records, the batched inverse of the 3×3 second-derivative
    systems, and a cache of box solvers keyed by (κ, box BC).
    """

    def __init__(self, geometry, n_controls=None, backend=None):
        self.geometry = geometry
        self.grid = geometry.grid
        self.records = geometry.records
        self.backend = backend if backend is not None else SerialBackend()
        m = default_control_count(geometry) if n_controls is None else int(n_controls)
        self.cps = control_points(geometry.curve, m)

        t1, t2 = self.cps.tangent[:, 0], self.cps.tangent[:, 1]
        a = np.empty((m, 3, 3))
        a[:, 0, 0] = t1 * t1
        a[:, 0, 1] = 2.0 * t1 * t2
        a[:, 0, 2] = t2 * t2
        a[:, 1, 0] = t1 * t2
        a[:, 1, 1] = t2 * t2 - t1 * t1
        a[:, 1, 2] = -t1 * t2
        a[:, 2, 0] = 1.0
        a[:, 2, 1] = 0.0
        a[:, 2, 2] = 1.0
        det = np.linalg.det(a)
        if np.any(np.abs(det) < 0.5):
            raise GeometryError("second-derivative jump system is near singular")
        self._inv3 = np.linalg.inv(a)

        self.w_records = interp_rows(self.records.theta, self.cps.theta)
        self._box_solvers = {}

    def box_solver(self, kappa, bc):
        key = (complex(kappa), bc)
        if key not in self._box_solvers:
            self._box_solvers[key] = BoxSolver(self.grid, kappa, bc, backend=self.backend)
        return self._box_solvers[key]


def compute_jumps(data, workspace, backend=None):
    """Jumps of u and its first/second derivatives at the control points."""
    backend = backend if backend is not None else workspace.backend
    cps = workspace.cps
    m = cps.m
    for name, arr in (("phi", data.phi), ("psi", data.psi), ("f_gamma", data.f_gamma)):
        if np.shape(arr) != (m,):
            raise GridError(f"{name} must have shape ({m},), got {np.shape(arr)}")

    phi_s, phi_ss = differentiate_density(data.phi, cps)
    psi_s, _ = differentiate_density(data.psi, cps)
    t1, t2 = cps.tangent[:, 0], cps.tangent[:, 1]
    dt1, dt2 = cps.dtan_ds[:, 0], cps.dtan_ds[:, 1]

    dtype = np.result_type(data.phi, data.psi, data.f_gamma, np.asarray(data.kappa))
    ju = np.asarray(data.phi, dtype=dtype)
    jx = np.empty(m, dtype=dtype)
    jy = np.empty(m, dtype=dtype)
    j2 = np.empty((m, 3), dtype=dtype)
    inv3 = workspace._inv3

    def jump_chunk(start, stop):
        sl = slice(start, stop)
        jx[sl] = t1[sl] * phi_s[sl] + t2[sl] * data.psi[sl]
        jy[sl] = t2[sl] * phi_s[sl] - t1[sl] * data.psi[sl]
        r = np.empty((stop - start, 3), dtype=dtype)
        r[:, 0] = phi_ss[sl] - dt1[sl] * jx[sl] - dt2[sl] * jy[sl]
        r[:, 1] = psi_s[sl] - dt2[sl] * jx[sl] + dt1[sl] * jy[sl]
        r[:, 2] = data.f_gamma[sl] + data.kappa * ju[sl]
        j2[sl] = np.einsum("pij,pj->pi", inv3[sl], r)

    backend.dispatch(KernelSpec("jumps-and-corrections", m, 256), jump_chunk)
    return JumpSet(u=ju, ux=jx, uy=jy, uxx=j2[:, 0], uxy=j2[:, 1], uyy=j2[:, 2])


def corrections(jumps, workspace, backend=None):
    """Right-hand-side correction field at irregular nodes.

    For each intersection record the jump data is interpolated to the
    crossing, Taylor-transported to the neighbor node along the crossed arm
    (distance d = neighbor − crossing) and accumulated onto the owning node
    with sign −1/h² for interior owners and +1/h² for exterior owners.
    """
    backend = backend if backend is not None else workspace.backend
    rec = workspace.records
    grid = workspace.grid
    jm = jumps.as_matrix()
    dtype = jm.dtype
    vals = np.empty(rec.n, dtype=dtype)
    w = workspace.w_records
    d = rec.d
    horizontal = rec.axis == 0
    sigma = np.where(rec.owner_interior, -1.0, 1.0) / grid.h**2

    def corr_chunk(start, stop):
        sl = slice(start, stop)
        j = w[sl] @ jm  # (chunk, 6): u, ux, uy, uxx, uxy, uyy
        darm = d[sl]
        j1 = np.where(horizontal[sl], j[:, 1], j[:, 2])
        j2 = np.where(horizontal[sl], j[:, 3], j[:, 5])
        vals[sl] = sigma[sl] * (j[:, 0] + j1 * darm + 0.5 * j2 * darm**2)

    backend.dispatch(KernelSpec("jumps-and-corrections", rec.n, 1024), corr_chunk)

    c = np.zeros(grid.n_nodes, dtype=dtype)
    if rec.n:
        c[rec.group_owners] = np.add.reduceat(vals, rec.group_starts)
    return c.reshape(grid.m + 1, grid.m + 1)


def jump_at_point(jumps, theta, workspace):
    """All six jump quantities interpolated to parameter(s) θ."""
    rows = interp_rows(theta, workspace.cps.theta)
    out = rows @ jumps.as_matrix()
    if np.isscalar(theta) or np.ndim(theta) == 0:
        return tuple(out[0])
    return out


def solve_interface(data, workspace, box_bc, backend=None):
    """Solve Δu − κu = F with jumps (Φ, Ψ) across Γ and a homogeneous box BC.

    Returns the full-grid field; the interior side approximates the PDE
    solution restricted to Ω, the exterior side its harmonic companion.
    """
    backend = backend if backend is not None else workspace.backend
    jumps = compute_jumps(data, workspace, backend=backend)
    c = corrections(jumps, workspace, backend=backend)
    rhs = data.F + c
    solver = workspace.box_solver(data.kappa, box_bc)
    return solver.solve(rhs)
