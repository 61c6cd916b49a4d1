"""Closed-form solutions used by the drivers and the test oracles.

Each entry bundles the callables the implicit steppers need at startup
(initial data and its Laplacian, time derivatives where the scheme uses
them) together with boundary-data evaluators. All functions accept numpy
arrays and broadcast.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError


class HeatPlaneDecay:
    """u(x,y,t) = exp(−t/c)·sin(0.6x + 0.8y), solving c·u_t = Δu, f ≡ 0."""

    def __init__(self, c=1.0):
        self.c = float(c)

    def u(self, x, y, t):
        return np.exp(-t / self.c) * np.sin(0.6 * x + 0.8 * y)

    def grad(self, x, y, t):
        amp = np.exp(-t / self.c) * np.cos(0.6 * x + 0.8 * y)
        return 0.6 * amp, 0.8 * amp

    def lap(self, x, y, t):
        return -self.u(x, y, t)

    def u0(self, x, y):
        return self.u(x, y, 0.0)

    def lap_u0(self, x, y):
        return self.lap(x, y, 0.0)

    def dirichlet(self, x, y, t):
        return self.u(x, y, t)

    def neumann(self, x, y, t, normal):
        gx, gy = self.grad(x, y, t)
        return gx * normal[:, 0] + gy * normal[:, 1]


class WaveStanding:
    """u(x,y,t) = cos(√2·t + phase)·sin x·sin y, solving u_tt = Δu."""

    root2 = np.sqrt(2.0)

    def __init__(self, phase=0.0):
        self.phase = float(phase)

    def u(self, x, y, t):
        return np.cos(self.root2 * t + self.phase) * np.sin(x) * np.sin(y)

    def grad(self, x, y, t):
        amp = np.cos(self.root2 * t + self.phase)
        return amp * np.cos(x) * np.sin(y), amp * np.sin(x) * np.cos(y)

    def lap(self, x, y, t):
        return -2.0 * self.u(x, y, t)

    def u0(self, x, y):
        return self.u(x, y, 0.0)

    def v0(self, x, y):
        return -self.root2 * np.sin(self.phase) * np.sin(x) * np.sin(y)

    def lap_u0(self, x, y):
        return -2.0 * self.u0(x, y)

    def lap_v0(self, x, y):
        return -2.0 * self.v0(x, y)

    def dirichlet(self, x, y, t):
        return self.u(x, y, t)

    def neumann(self, x, y, t, normal):
        gx, gy = self.grad(x, y, t)
        return gx * normal[:, 0] + gy * normal[:, 1]


class SchrodingerPhaseRotation:
    """u(x,y,t) = e^{it}·cos x·cos y with v = 1 − cos²x·cos²y and w = 1,
    solving i·u_t = Δu + v·u + w|u|²·u."""

    w = 1.0

    def u(self, x, y, t):
        return np.exp(1j * t) * np.cos(x) * np.cos(y)

    def lap(self, x, y, t):
        return -2.0 * self.u(x, y, t)

    def u0(self, x, y):
        return self.u(x, y, 0.0) + 0j

    def lap_u0(self, x, y):
        return self.lap(x, y, 0.0) + 0j

    def potential(self, x, y):
        return 1.0 - np.cos(x) ** 2 * np.cos(y) ** 2

    def dirichlet(self, x, y, t):
        return self.u(x, y, t)


class PiecewiseField:
    """Two-sided manufactured field: u⁺ = sin x·cos y inside Γ,
    u⁻ = x² − y² outside, with sources f± = Δu± − κu± on each side."""

    def __init__(self, kappa=2.0):
        self.kappa = float(kappa)

    def u_in(self, x, y):
        return np.sin(x) * np.cos(y)

    def grad_in(self, x, y):
        return np.cos(x) * np.cos(y), -np.sin(x) * np.sin(y)

    def hess_in(self, x, y):
        s = np.sin(x) * np.cos(y)
        return -s, -np.cos(x) * np.sin(y), -s  # u_xx, u_xy, u_yy

    def f_in(self, x, y):
        return -(2.0 + self.kappa) * np.sin(x) * np.cos(y)

    def u_out(self, x, y):
        return x**2 - y**2

    def grad_out(self, x, y):
        return 2.0 * x, -2.0 * y

    def hess_out(self, x, y):
        one = np.ones_like(np.asarray(x, dtype=float))
        return 2.0 * one, 0.0 * one, -2.0 * one

    def f_out(self, x, y):
        return -self.kappa * (x**2 - y**2)

    def phi(self, x, y):
        return self.u_in(x, y) - self.u_out(x, y)

    def psi(self, x, y, normal):
        gxi, gyi = self.grad_in(x, y)
        gxo, gyo = self.grad_out(x, y)
        return (gxi - gxo) * normal[:, 0] + (gyi - gyo) * normal[:, 1]

    def f_jump(self, x, y):
        return self.f_in(x, y) - self.f_out(x, y)


class StaticPlaneWave:
    """u = sin(0.6x + 0.8y), for the static BVP Δu − κu = f with
    f = −(1 + κ)·u."""

    def __init__(self, kappa=2.0):
        self.kappa = float(kappa)

    def u(self, x, y):
        return np.sin(0.6 * x + 0.8 * y)

    def grad(self, x, y):
        amp = np.cos(0.6 * x + 0.8 * y)
        return 0.6 * amp, 0.8 * amp

    def f(self, x, y):
        return -(1.0 + self.kappa) * self.u(x, y)

    def dirichlet(self, x, y):
        return self.u(x, y)

    def neumann(self, x, y, normal):
        gx, gy = self.grad(x, y)
        return gx * normal[:, 0] + gy * normal[:, 1]


REGISTRY = {
    "heat-plane-decay": HeatPlaneDecay,
    "wave-standing": WaveStanding,
    "schrodinger-phase-rotation": SchrodingerPhaseRotation,
}


def make_solution(name, **params):
    if name not in REGISTRY:
        raise ConfigError(
            f"unknown manufactured solution {name!r}; available: {sorted(REGISTRY)}"
        )
    return REGISTRY[name](**params)
