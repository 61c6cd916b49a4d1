"""Fast direct solver for the five-point discretization of Δu − κu = rhs on
the square box, with homogeneous Dirichlet or mirror-ghost Neumann closure.

Both closures diagonalize exactly in tensor-product sine/cosine bases:
eigenvalues of the 1-D second difference are (2cos(pπ/M) − 2)/h², with
p = 1..M−1 (Dirichlet) or p = 0..M (Neumann). Transforms run through the
kernel engine as row/column passes so the work decomposition matches the
rest of the solver; scalars may be real or complex (κ = 2i/τ etc.).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import dct, dst, idct, idst

from .engine import KernelSpec, SerialBackend
from .errors import ConfigError, GridError

BOX_BCS = ("dirichlet-zero", "neumann-zero")
ROW_CHUNK = 64


class BoxSolver:
    """Caches the eigenvalue denominators for one (grid, κ, box BC)."""

    def __init__(self, grid, kappa, bc, backend=None):
        if bc not in BOX_BCS:
            raise ConfigError(f"unknown box boundary condition {bc!r}; expected one of {BOX_BCS}")
        kappa = complex(kappa) if np.iscomplexobj(kappa) or isinstance(kappa, complex) else float(kappa)
        if bc == "neumann-zero" and kappa == 0:
            raise ConfigError("neumann-zero box with κ = 0 is singular (constant null mode)")
        self.grid = grid
        self.kappa = kappa
        self.bc = bc
        self.backend = backend if backend is not None else SerialBackend()
        m, h = grid.m, grid.h
        if bc == "dirichlet-zero":
            p = np.arange(1, m)
        else:
            p = np.arange(0, m + 1)
        lam = (2.0 * np.cos(p * np.pi / m) - 2.0) / h**2
        self.denom = lam[:, None] + lam[None, :] - kappa

    def solve(self, rhs):
        """Return the full (M+1, M+1) solution field for the given rhs.

        Dirichlet: rhs is read at interior nodes only and the returned field
        is zero on ∂B. Neumann: rhs is read everywhere and the mirror-ghost
        stencil holds up to the box edge.
        """
        m = self.grid.m
        if rhs.shape != (m + 1, m + 1):
            raise GridError(f"rhs shape {rhs.shape} does not match grid ({m + 1}, {m + 1})")
        out_dtype = np.result_type(rhs.dtype, np.asarray(self.kappa).dtype)

        if self.bc == "dirichlet-zero":
            w = np.array(rhs[1:m, 1:m], dtype=out_dtype)
            fwd, inv = dst, idst
        else:
            w = np.array(rhs, dtype=out_dtype)
            fwd, inv = dct, idct

        n = w.shape[0]
        backend = self.backend
        denom = self.denom

        def rows_fwd(start, stop):
            w[start:stop] = fwd(w[start:stop], type=1, axis=1)

        def cols_fwd(start, stop):
            w[:, start:stop] = fwd(w[:, start:stop], type=1, axis=0)

        def scale(start, stop):
            w[start:stop] /= denom[start:stop]

        def cols_inv(start, stop):
            w[:, start:stop] = inv(w[:, start:stop], type=1, axis=0)

        def rows_inv(start, stop):
            w[start:stop] = inv(w[start:stop], type=1, axis=1)

        backend.dispatch(KernelSpec("transform-rows", n, ROW_CHUNK), rows_fwd)
        backend.dispatch(KernelSpec("transform-cols", n, ROW_CHUNK), cols_fwd)
        backend.dispatch(KernelSpec("diagonal-scale", n, ROW_CHUNK), scale)
        backend.dispatch(KernelSpec("transform-cols", n, ROW_CHUNK), cols_inv)
        backend.dispatch(KernelSpec("transform-rows", n, ROW_CHUNK), rows_inv)

        if self.bc == "dirichlet-zero":
            u = np.zeros((m + 1, m + 1), dtype=out_dtype)
            u[1:m, 1:m] = w
            return u
        return w


@dataclass
class BoxProblem:
    """One box solve: grid, κ, box closure, and the right-hand side field."""

    grid: object
    kappa: complex
    bc: str
    rhs: np.ndarray

    def __post_init__(self):
        if self.bc not in BOX_BCS:
            raise ConfigError(
                f"unknown box boundary condition {self.bc!r}; expected one of {BOX_BCS}"
            )
        if self.bc == "neumann-zero" and complex(self.kappa) == 0:
            raise ConfigError("neumann-zero box with κ = 0 is singular (constant null mode)")


def solve_box(problem, backend=None):
    solver = BoxSolver(problem.grid, problem.kappa, problem.bc, backend=backend)
    return solver.solve(problem.rhs)


def apply_box_operator(grid, u, kappa, bc):
    """Direct stencil application (Δ_h − κ)u at the solve nodes.

    Returns a full-grid array; for the Dirichlet closure the boundary ring is
    zero-filled (the operator is only defined at interior nodes there).
    """
    m, h = grid.m, grid.h
    out = np.zeros_like(u, dtype=np.result_type(u.dtype, np.asarray(kappa).dtype))
    if bc == "dirichlet-zero":
        ue = u
        out[1:m, 1:m] = (
            ue[1:m, 2:] + ue[1:m, :-2] + ue[2:, 1:m] + ue[:-2, 1:m] - 4.0 * ue[1:m, 1:m]
        ) / h**2 - kappa * ue[1:m, 1:m]
    elif bc == "neumann-zero":
        ue = np.pad(u, 1, mode="reflect")
        out[:, :] = (
            ue[1:-1, 2:] + ue[1:-1, :-2] + ue[2:, 1:-1] + ue[:-2, 1:-1] - 4.0 * ue[1:-1, 1:-1]
        ) / h**2 - kappa * u
    else:
        raise ConfigError(f"unknown box boundary condition {bc!r}")
    return out
