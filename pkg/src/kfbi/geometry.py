"""Closed boundary curves, control points, and periodic boundary calculus.

Curves carry two views: a parametric map theta in [0, 2pi) -> (x, y) used for
control points, tangents, and jump transport, and an implicit function
phi_ls(x, y) (negative inside the domain) used for node classification and
grid-edge intersection. Analytic kinds (circle, ellipse, star) have closed
forms for both; the spline kind interpolates user points with a periodic C^2
cubic and derives the implicit view from a winding test plus nearest-point
distance.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, GeometryError

# Grid nodes with |phi_ls| below this count as interior (deterministic
# resolution of the measure-zero on-curve case).
ON_CURVE_TOL = 1e-13


class Curve:
    """Base class: closed, at least C^2, counterclockwise parameterization."""

    kind = "abstract"

    def point(self, theta):
        raise NotImplementedError

    def velocity(self, theta):
        raise NotImplementedError

    def acceleration(self, theta):
        raise NotImplementedError

    def implicit(self, x, y):
        raise NotImplementedError

    def param_near(self, x, y):
        """Parameter of the curve point closest to (x, y); exact on Γ."""
        raise NotImplementedError


class CircleCurve(Curve):
    kind = "circle"

    def __init__(self, radius=1.0, center=(0.0, 0.0)):
        if radius <= 0:
            raise GeometryError("circle radius must be positive")
        self.radius = float(radius)
        self.center = (float(center[0]), float(center[1]))

    def point(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.stack(
            [
                self.center[0] + self.radius * np.cos(theta),
                self.center[1] + self.radius * np.sin(theta),
            ],
            axis=-1,
        )

    def velocity(self, theta):
        theta = np.asarray(theta, dtype=float)
        return self.radius * np.stack([-np.sin(theta), np.cos(theta)], axis=-1)

    def acceleration(self, theta):
        theta = np.asarray(theta, dtype=float)
        return self.radius * np.stack([-np.cos(theta), -np.sin(theta)], axis=-1)

    def implicit(self, x, y):
        dx = np.asarray(x, dtype=float) - self.center[0]
        dy = np.asarray(y, dtype=float) - self.center[1]
        return dx * dx + dy * dy - self.radius**2

    def param_near(self, x, y):
        dx = np.asarray(x, dtype=float) - self.center[0]
        dy = np.asarray(y, dtype=float) - self.center[1]
        return np.mod(np.arctan2(dy, dx), 2.0 * np.pi)


class EllipseCurve(Curve):
    kind = "ellipse"

    def __init__(self, a=1.0, b=1.0, center=(0.0, 0.0)):
        if a <= 0 or b <= 0:
            raise GeometryError("ellipse semi-axes must be positive")
        self.a = float(a)
        self.b = float(b)
        self.center = (float(center[0]), float(center[1]))

    def point(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.stack(
            [
                self.center[0] + self.a * np.cos(theta),
                self.center[1] + self.b * np.sin(theta),
            ],
            axis=-1,
        )

    def velocity(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.stack([-self.a * np.sin(theta), self.b * np.cos(theta)], axis=-1)

    def acceleration(self, theta):
        theta = np.asarray(theta, dtype=float)
        return np.stack([-self.a * np.cos(theta), -self.b * np.sin(theta)], axis=-1)

    def implicit(self, x, y):
        dx = (np.asarray(x, dtype=float) - self.center[0]) / self.a
        dy = (np.asarray(y, dtype=float) - self.center[1]) / self.b
        return dx * dx + dy * dy - 1.0

    def param_near(self, x, y):
        dx = (np.asarray(x, dtype=float) - self.center[0]) / self.a
        dy = (np.asarray(y, dtype=float) - self.center[1]) / self.b
        return np.mod(np.arctan2(dy, dx), 2.0 * np.pi)


class StarCurve(Curve):
    """Polar star r(theta) = scale * ((1 - c) + c*cos(k*theta))."""

    kind = "star"

    def __init__(self, scale=1.0, c=0.2, lobes=3, center=(0.0, 0.0)):
        if scale <= 0:
            raise GeometryError("star scale must be positive")
        if not 0.0 <= c < 0.5:
            # r must stay positive: min radius is scale*(1-2c)
            raise GeometryError("star parameter c must lie in [0, 0.5)")
        if lobes < 1 or int(lobes) != lobes:
            raise GeometryError("star lobe count must be a positive integer")
        self.scale = float(scale)
        self.c = float(c)
        self.lobes = int(lobes)
        self.center = (float(center[0]), float(center[1]))

    def _radius(self, theta):
        return self.scale * ((1.0 - self.c) + self.c * np.cos(self.lobes * theta))

    def _radius_d(self, theta):
        return -self.scale * self.c * self.lobes * np.sin(self.lobes * theta)

    def _radius_dd(self, theta):
        return -self.scale * self.c * self.lobes**2 * np.cos(self.lobes * theta)

    def point(self, theta):
        theta = np.asarray(theta, dtype=float)
        r = self._radius(theta)
        return np.stack(
            [
                self.center[0] + r * np.cos(theta),
                self.center[1] + r * np.sin(theta),
            ],
            axis=-1,
        )

    def velocity(self, theta):
        theta = np.asarray(theta, dtype=float)
        r = self._radius(theta)
        rd = self._radius_d(theta)
        ct, st = np.cos(theta), np.sin(theta)
        return np.stack([rd * ct - r * st, rd * st + r * ct], axis=-1)

    def acceleration(self, theta):
        theta = np.asarray(theta, dtype=float)
        r = self._radius(theta)
        rd = self._radius_d(theta)
        rdd = self._radius_dd(theta)
        ct, st = np.cos(theta), np.sin(theta)
        return np.stack(
            [
                (rdd - r) * ct - 2.0 * rd * st,
                (rdd - r) * st + 2.0 * rd * ct,
            ],
            axis=-1,
        )

    def implicit(self, x, y):
        dx = np.asarray(x, dtype=float) - self.center[0]
        dy = np.asarray(y, dtype=float) - self.center[1]
        rho = np.hypot(dx, dy)
        ang = np.arctan2(dy, dx)
        return rho - self._radius(ang)

    def param_near(self, x, y):
        dx = np.asarray(x, dtype=float) - self.center[0]
        dy = np.asarray(y, dtype=float) - self.center[1]
        return np.mod(np.arctan2(dy, dx), 2.0 * np.pi)


class SplineCurve(Curve):
    """Periodic C^2 cubic through given points, parameterized on [0, 2pi).

    The implicit view is a signed distance: magnitude from a nearest-point
    search (dense seed + Newton polish), sign from an even-odd crossing test
    against a dense polyline.
    """

    kind = "spline"

    def __init__(self, points, n_dense=2048):
        from scipy.interpolate import CubicSpline

        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 4:
            raise GeometryError("spline curve needs at least 4 (x, y) points")
        if np.linalg.norm(pts[0] - pts[-1]) < 1e-14 * max(1.0, abs(pts).max()):
            pts = pts[:-1]  # drop duplicated closing point
        # enforce counterclockwise orientation (outward normal convention)
        x, y = pts[:, 0], pts[:, 1]
        area2 = np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
        if abs(area2) < 1e-14:
            raise GeometryError("spline control polygon is degenerate")
        if area2 < 0:
            pts = pts[::-1]
        n = pts.shape[0]
        knots = 2.0 * np.pi * np.arange(n + 1) / n
        closed = np.vstack([pts, pts[:1]])
        self._spline = CubicSpline(knots, closed, bc_type="periodic", axis=0)
        self._d1 = self._spline.derivative(1)
        self._d2 = self._spline.derivative(2)
        self._theta_dense = 2.0 * np.pi * np.arange(n_dense) / n_dense
        self._pts_dense = self._spline(self._theta_dense)

    def point(self, theta):
        return self._spline(np.mod(theta, 2.0 * np.pi))

    def velocity(self, theta):
        return self._d1(np.mod(theta, 2.0 * np.pi))

    def acceleration(self, theta):
        return self._d2(np.mod(theta, 2.0 * np.pi))

    def _nearest_param(self, x, y):
        p = np.stack([np.asarray(x, dtype=float), np.asarray(y, dtype=float)], axis=-1)
        flat = p.reshape(-1, 2)
        d2 = ((flat[:, None, :] - self._pts_dense[None, :, :]) ** 2).sum(axis=2)
        t = self._theta_dense[np.argmin(d2, axis=1)]
        # Newton on g(t) = (gamma(t) - p) . gamma'(t) = 0
        for _ in range(4):
            q = self._spline(t)
            v = self._d1(t)
            a = self._d2(t)
            diff = q - flat
            g = (diff * v).sum(axis=1)
            gp = (v * v).sum(axis=1) + (diff * a).sum(axis=1)
            safe = np.abs(gp) > 1e-14
            t = np.where(safe, t - g / np.where(safe, gp, 1.0), t)
        t = np.mod(t, 2.0 * np.pi)
        return t.reshape(np.shape(x))

    def _inside(self, x, y):
        # even-odd rule against the dense polyline
        px = np.asarray(x, dtype=float).reshape(-1, 1)
        py = np.asarray(y, dtype=float).reshape(-1, 1)
        vx = self._pts_dense[:, 0]
        vy = self._pts_dense[:, 1]
        wx = np.roll(vx, -1)
        wy = np.roll(vy, -1)
        straddle = (vy[None, :] > py) != (wy[None, :] > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_cross = vx[None, :] + (py - vy[None, :]) / (wy[None, :] - vy[None, :]) * (
                wx[None, :] - vx[None, :]
            )
        hits = straddle & (px < x_cross)
        return (hits.sum(axis=1) % 2 == 1).reshape(np.shape(x))

    def implicit(self, x, y):
        t = self._nearest_param(x, y)
        q = self._spline(t)
        p = np.stack([np.asarray(x, dtype=float), np.asarray(y, dtype=float)], axis=-1)
        dist = np.linalg.norm(p - q, axis=-1)
        sign = np.where(self._inside(x, y), -1.0, 1.0)
        return sign * dist

    def param_near(self, x, y):
        return self._nearest_param(x, y)


def make_curve(kind, **params):
    """Factory used by the run configuration."""
    kinds = {
        "circle": CircleCurve,
        "ellipse": EllipseCurve,
        "star": StarCurve,
        "spline": SplineCurve,
    }
    if kind not in kinds:
        raise ConfigError(f"unknown curve type '{kind}'")
    try:
        return kinds[kind](**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for curve '{kind}': {exc}") from exc


def evaluate(curve, theta):
    """Position, unit tangent, unit outward normal, and d(tangent)/ds.

    The tangent derivative with respect to arc length supplies the
    (tau1', tau2') coefficients of the second-derivative jump system.
    """
    theta = np.asarray(theta, dtype=float)
    pos = curve.point(theta)
    vel = curve.velocity(theta)
    acc = curve.acceleration(theta)
    speed = np.linalg.norm(vel, axis=-1)
    if np.any(speed < 1e-14):
        raise GeometryError("degenerate parameterization: |x'(theta)| < 1e-14")
    tangent = vel / speed[..., None]
    # d(tangent)/dtheta = acc/|v| - v (v.acc)/|v|^3 ; divide by |v| for d/ds
    va = (vel * acc).sum(axis=-1)
    dtan_dtheta = acc / speed[..., None] - vel * (va / speed**3)[..., None]
    dtan_ds = dtan_dtheta / speed[..., None]
    normal = np.stack([tangent[..., 1], -tangent[..., 0]], axis=-1)
    return pos, tangent, normal, dtan_ds


def classify_point(curve, x, y):
    """True where (x, y) is interior (phi_ls <= on-curve tolerance)."""
    return curve.implicit(x, y) <= ON_CURVE_TOL


def edge_intersection(curve, a, b):
    """Crossing of Γ with the grid-edge segment [a, b].

    Returns (xi, theta_xi). Precondition: a and b classify to opposite
    sides. Bracketed bisection (30 halvings) followed by two Newton steps
    with a central-difference slope along the segment.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    t, theta = _edge_intersections_batch(
        curve, a.reshape(1, 2), b.reshape(1, 2)
    )
    xi = a + t[0] * (b - a)
    return xi, theta[0]


def _edge_intersections_batch(curve, a, b):
    """Vectorized root find along segments a[k] -> b[k].

    Returns (t, theta) with the crossing at a + t*(b - a). Sides are judged
    with the same interior rule as classification so that nodes lying
    exactly on Γ stay consistent.
    """
    fa = curve.implicit(a[:, 0], a[:, 1])
    fb = curve.implicit(b[:, 0], b[:, 1])
    side_a = fa <= ON_CURVE_TOL
    side_b = fb <= ON_CURVE_TOL
    if np.any(side_a == side_b):
        raise GeometryError("edge_intersection called on an edge with no sign change")

    lo = np.zeros(a.shape[0])
    hi = np.ones(a.shape[0])
    for _ in range(30):
        mid = 0.5 * (lo + hi)
        pm = a + mid[:, None] * (b - a)
        side_m = curve.implicit(pm[:, 0], pm[:, 1]) <= ON_CURVE_TOL
        take_lo = side_m == side_a
        lo = np.where(take_lo, mid, lo)
        hi = np.where(take_lo, hi, mid)

    t = 0.5 * (lo + hi)
    dt = 1e-7
    for _ in range(2):
        pc = a + t[:, None] * (b - a)
        pp = a + (t + dt)[:, None] * (b - a)
        pmns = a + (t - dt)[:, None] * (b - a)
        f = curve.implicit(pc[:, 0], pc[:, 1])
        slope = (curve.implicit(pp[:, 0], pp[:, 1]) - curve.implicit(pmns[:, 0], pmns[:, 1])) / (
            2.0 * dt
        )
        safe = np.abs(slope) > 1e-14
        step = np.where(safe, f / np.where(safe, slope, 1.0), 0.0)
        t = np.clip(t - step, lo, hi)

    xi = a + t[:, None] * (b - a)
    theta = curve.param_near(xi[:, 0], xi[:, 1])
    return t, theta


class ControlPointSet:
    """M quasi-uniform boundary points at theta_i = 2*pi*i/M with geometry."""

    def __init__(self, curve, m):
        if m < 8:
            raise ConfigError("control point count must be >= 8")
        self.curve = curve
        self.m = int(m)
        self.theta = 2.0 * np.pi * np.arange(self.m) / self.m
        self.dtheta = 2.0 * np.pi / self.m
        pos, tangent, normal, dtan_ds = evaluate(curve, self.theta)
        self.pos = pos
        self.tangent = tangent
        self.normal = normal
        self.dtan_ds = dtan_ds
        self.speed = np.linalg.norm(curve.velocity(self.theta), axis=-1)

    @property
    def x(self):
        return self.pos[:, 0]

    @property
    def y(self):
        return self.pos[:, 1]


def control_points(curve, m):
    return ControlPointSet(curve, m)


def _periodic_deriv_theta(values, dtheta):
    """Spectral first derivative on a uniform periodic grid."""
    m = values.shape[-1]
    k = np.fft.fftfreq(m) * m
    if m % 2 == 0:
        # The sawtooth Nyquist mode has no well-defined odd derivative.
        k[m // 2] = 0.0
    factor = 1j * k * (2.0 * np.pi / (m * dtheta))
    dv = np.fft.ifft(np.fft.fft(values) * factor)
    if np.isrealobj(values):
        return dv.real
    return dv


def differentiate_density(values, cps):
    """First and second arc-length derivatives of a boundary density.

    Spectral periodic differentiation in theta, chain-ruled by ds/dtheta:
    phi_s = phi_theta / s', phi_ss = (phi_s)_theta / s'.  Applying the
    chain rule twice picks up the s'' term on curves with non-uniform
    parameter speed.
    """
    values = np.asarray(values)
    if values.shape[-1] != cps.m:
        raise ConfigError("density length does not match control point count")
    if cps.m < 8:
        raise ConfigError("differentiation needs at least 8 control points")
    d1 = _periodic_deriv_theta(values, cps.dtheta) / cps.speed
    d2 = _periodic_deriv_theta(d1, cps.dtheta) / cps.speed
    return d1, d2
