"""Jump relations, stencil corrections, and the unified interface solve."""

import numpy as np
import pytest

from kfbi import (
    CircleCurve,
    GridError,
    InterfaceData,
    InterfaceWorkspace,
    PiecewiseField,
    StarCurve,
    build_grid,
    compute_jumps,
    corrections,
    control_points,
    interp_rows,
    jump_at_point,
    solve_interface,
)
from kfbi.interface import MIN_CONTROL_SPACING, default_control_count

BOX = (-1.5, 1.5, -1.5, 1.5)
PI_BOX = (-np.pi, np.pi, -np.pi, np.pi)


def test_interp_rows_trig_exact_below_nyquist():
    m = 32
    nodes = 2.0 * np.pi * np.arange(m) / m
    rng = np.random.default_rng(21)
    query = rng.uniform(0, 2 * np.pi, size=25)
    rows = interp_rows(query, nodes)
    assert rows.shape == (25, m)
    assert np.allclose(rows.sum(axis=1), 1.0, atol=1e-12)
    f = lambda t: np.cos(5 * t) - 2.0 * np.sin(3 * t) + 0.5
    assert np.max(np.abs(rows @ f(nodes) - f(query))) < 1e-12
    # node values are reproduced exactly
    rows_at_nodes = interp_rows(nodes, nodes)
    assert np.allclose(rows_at_nodes, np.eye(m), atol=1e-12)


def test_interp_rows_small_m_cubic_path():
    # below the trig threshold interpolation falls back to a periodic cubic
    f = lambda t: np.sin(t) + 0.3 * np.cos(2 * t)
    rng = np.random.default_rng(22)
    query = rng.uniform(0, 2 * np.pi, size=40)
    errs = []
    for m in (16, 24):
        nodes = 2.0 * np.pi * np.arange(m) / m
        rows = interp_rows(query, nodes)
        assert np.allclose(rows.sum(axis=1), 1.0, atol=1e-10)
        assert np.allclose(interp_rows(nodes, nodes) @ f(nodes), f(nodes), atol=1e-12)
        errs.append(np.max(np.abs(rows @ f(nodes) - f(query))))
    # fourth-order refinement between m=16 and m=24: factor (24/16)^4 ~ 5
    assert errs[0] > errs[1]
    assert errs[0] / errs[1] > 3.0


def test_compute_jumps_matches_analytic_derivative_jumps():
    pf = PiecewiseField(kappa=2.0)
    geo = build_grid(BOX, 64, CircleCurve(1.0))
    ws = InterfaceWorkspace(geo)
    cps = ws.cps
    data = InterfaceData(
        kappa=2.0,
        F=np.zeros_like(geo.grid.X),
        phi=pf.phi(cps.x, cps.y),
        psi=pf.psi(cps.x, cps.y, cps.normal),
        f_gamma=pf.f_jump(cps.x, cps.y),
    )
    js = compute_jumps(data, ws)
    gi, go = pf.grad_in(cps.x, cps.y), pf.grad_out(cps.x, cps.y)
    hi, ho = pf.hess_in(cps.x, cps.y), pf.hess_out(cps.x, cps.y)
    assert np.max(np.abs(js.u - pf.phi(cps.x, cps.y))) == 0.0
    assert np.max(np.abs(js.ux - (gi[0] - go[0]))) < 1e-12
    assert np.max(np.abs(js.uy - (gi[1] - go[1]))) < 1e-12
    assert np.max(np.abs(js.uxx - (hi[0] - ho[0]))) < 1e-9
    assert np.max(np.abs(js.uxy - (hi[1] - ho[1]))) < 1e-9
    assert np.max(np.abs(js.uyy - (hi[2] - ho[2]))) < 1e-9
    # the six jumps satisfy the consistency identity [Δu] = [f] + κ[u]
    lap = js.uxx + js.uyy
    assert np.max(np.abs(lap - (pf.f_jump(cps.x, cps.y) + 2.0 * js.u))) < 1e-9
    assert js.as_matrix().shape == (cps.m, 6)


def test_compute_jumps_validates_shapes():
    geo = build_grid(BOX, 32, CircleCurve(1.0))
    ws = InterfaceWorkspace(geo)
    bad = InterfaceData(
        kappa=1.0,
        F=np.zeros_like(geo.grid.X),
        phi=np.zeros(ws.cps.m + 1),
        psi=np.zeros(ws.cps.m),
        f_gamma=np.zeros(ws.cps.m),
    )
    with pytest.raises(GridError):
        compute_jumps(bad, ws)


def test_corrections_support_and_linearity():
    geo = build_grid(BOX, 64, StarCurve(1.0, c=0.2, lobes=3))
    ws = InterfaceWorkspace(geo)
    m = ws.cps.m
    rng = np.random.default_rng(23)

    def corr_of(phi, psi, fg):
        data = InterfaceData(kappa=3.0, F=np.zeros_like(geo.grid.X),
                             phi=phi, psi=psi, f_gamma=fg)
        return corrections(compute_jumps(data, ws), ws)

    zero = corr_of(np.zeros(m), np.zeros(m), np.zeros(m))
    assert np.all(zero == 0.0)

    phi, psi, fg = rng.standard_normal((3, m))
    c1 = corr_of(phi, psi, fg)
    # nonzero only at irregular nodes
    assert np.any(c1 != 0.0)
    assert np.all(c1[~geo.classification.irregular] == 0.0)
    # doubling the boundary data doubles the corrections (exact in binary)
    c2 = corr_of(2 * phi, 2 * psi, 2 * fg)
    assert np.array_equal(c2, 2.0 * c1)
    # additivity up to rounding
    phi_b, psi_b, fg_b = rng.standard_normal((3, m))
    c_sum = corr_of(phi + phi_b, psi + psi_b, fg + fg_b)
    c_parts = c1 + corr_of(phi_b, psi_b, fg_b)
    scale = np.max(np.abs(c_parts))
    assert np.max(np.abs(c_sum - c_parts)) < 1e-10 * scale


def test_interface_solve_piecewise_field_converges():
    pf = PiecewiseField(kappa=2.0)
    errs = []
    for m in (64, 128):
        geo = build_grid(BOX, m, CircleCurve(1.0))
        ws = InterfaceWorkspace(geo)
        cps = ws.cps
        X, Y = geo.grid.X, geo.grid.Y
        interior = geo.classification.interior
        data = InterfaceData(
            kappa=2.0,
            F=np.where(interior, pf.f_jump(X, Y), 0.0),
            phi=pf.phi(cps.x, cps.y),
            psi=pf.psi(cps.x, cps.y, cps.normal),
            f_gamma=pf.f_jump(cps.x, cps.y),
        )
        v = solve_interface(data, ws, box_bc="dirichlet-zero")
        v_exact = np.where(interior, pf.u_in(X, Y) - pf.u_out(X, Y), 0.0)
        errs.append(np.max(np.abs((v - v_exact)[interior])))
        # the exterior companion of the zero-exterior lift stays near zero
        assert np.max(np.abs(v[~interior])) < 5e-4
    assert errs[0] < 8e-5 and errs[1] < 2e-5
    assert errs[0] / errs[1] > 3.0


def test_default_control_count_rules():
    # unit circle: speed 1, arc spacing 2π/m vs 1.8h — M survives the cap
    geo = build_grid(BOX, 64, CircleCurve(1.0))
    assert default_control_count(geo) == 64
    assert InterfaceWorkspace(geo).cps.m == 64
    geo = build_grid(BOX, 128, CircleCurve(1.0))
    assert default_control_count(geo) == 128

    # three-lobed star at scale 1.5: the slow neck forces half the count
    geo = build_grid(PI_BOX, 64, StarCurve(1.5, c=0.2, lobes=3))
    assert default_control_count(geo) == 32
    geo = build_grid(PI_BOX, 128, StarCurve(1.5, c=0.2, lobes=3))
    assert default_control_count(geo) == 64

    for geo_args in ((BOX, 64, CircleCurve(1.0)),
                     (BOX, 128, StarCurve(1.0, c=0.2, lobes=3)),
                     (PI_BOX, 64, StarCurve(1.5, c=0.2, lobes=3))):
        geo = build_grid(*geo_args)
        m_ctl = default_control_count(geo)
        grid_m, h = geo.grid.m, geo.grid.h
        assert m_ctl % 2 == 0 and 8 <= m_ctl <= grid_m
        theta = 2.0 * np.pi * np.arange(4096) / 4096
        vel = geo.curve.velocity(theta)
        speed_min = np.min(np.hypot(vel[:, 0], vel[:, 1]))
        # chosen count satisfies the spacing floor; the next even count
        # would violate it unless the grid cap bites first
        assert speed_min * 2.0 * np.pi / m_ctl >= MIN_CONTROL_SPACING * h - 1e-12
        if m_ctl < grid_m:
            assert speed_min * 2.0 * np.pi / (m_ctl + 2) < MIN_CONTROL_SPACING * h

    # explicit override wins
    geo = build_grid(BOX, 64, CircleCurve(1.0))
    assert InterfaceWorkspace(geo, n_controls=40).cps.m == 40


def test_jump_at_point_interpolates_jumps():
    pf = PiecewiseField(kappa=2.0)
    geo = build_grid(BOX, 64, CircleCurve(1.0))
    ws = InterfaceWorkspace(geo)
    cps = ws.cps
    data = InterfaceData(
        kappa=2.0,
        F=np.zeros_like(geo.grid.X),
        phi=pf.phi(cps.x, cps.y),
        psi=pf.psi(cps.x, cps.y, cps.normal),
        f_gamma=pf.f_jump(cps.x, cps.y),
    )
    js = compute_jumps(data, ws)
    theta = 1.234
    single = jump_at_point(js, theta, ws)
    assert len(single) == 6
    p = geo.curve.point(np.array([theta]))[0]
    assert abs(single[0] - pf.phi(p[0], p[1])) < 1e-10
    batch = jump_at_point(js, np.array([theta, 2.5]), ws)
    assert batch.shape == (2, 6)
    assert np.allclose(batch[0], single, atol=1e-14)


def test_workspace_box_solver_cache():
    geo = build_grid(BOX, 32, CircleCurve(1.0))
    ws = InterfaceWorkspace(geo)
    a = ws.box_solver(2.0, "dirichlet-zero")
    assert ws.box_solver(2.0, "dirichlet-zero") is a
    assert ws.box_solver(3.0, "dirichlet-zero") is not a
    assert ws.box_solver(2.0, "neumann-zero") is not a
