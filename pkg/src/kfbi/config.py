"""Run configuration: TOML ingestion, validation, and assembly of the
objects a run needs (curve, manufactured solution, problem spec).

Convergence runs list several grid sizes; the time step is tied to the grid
by τ(M) = τ₀·M₀/M (halving τ with every grid doubling) so that temporal and
spatial refinement stay locked together.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .geometry import make_curve
from .solutions import (
    HeatPlaneDecay,
    SchrodingerPhaseRotation,
    WaveStanding,
)
from .timestepping import ProblemSpec

_KNOWN_KEYS = {
    "equation", "bc", "solution", "curve", "box", "m", "tau", "t_final",
    "c", "theta", "w", "splitting", "phase", "allow_cfl_risk",
    "blowup_threshold", "gamma", "tol", "max_iter", "backend",
    "snapshots", "out_dir", "figures", "backends",
}


@dataclass
class RunConfig:
    equation: str
    bc: str
    curve: dict
    box: tuple
    m_list: list
    tau0: float
    t_final: float
    solution: str = ""
    c: float = 1.0
    theta: float = 0.25
    w: float = 1.0
    splitting: str = "strang"
    phase: float = 0.0
    allow_cfl_risk: bool = False
    blowup_threshold: float = 1e10
    gamma: float = 0.8
    tol: float = 1e-8
    max_iter: int = 200
    backend: str = "serial"
    backends: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    out_dir: str = "out"
    figures: bool = True

    def tau_for(self, m):
        return self.tau0 * self.m_list[0] / m

    def tau_list(self):
        return [self.tau_for(m) for m in self.m_list]


_DEFAULT_SOLUTIONS = {
    "heat": "heat-plane-decay",
    "wave": "wave-standing",
    "schrodinger": "schrodinger-phase-rotation",
}


def _validate(raw):
    unknown = set(raw) - _KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key in ("equation", "bc", "curve", "box", "m", "tau", "t_final"):
        if key not in raw:
            raise ConfigError(f"config is missing required key {key!r}")

    equation = raw["equation"]
    if equation not in ("heat", "wave", "schrodinger"):
        raise ConfigError(f"unknown equation {equation!r}")
    bc = raw["bc"]
    if bc not in ("dirichlet", "neumann"):
        raise ConfigError(f"unknown bc {bc!r}")

    box = raw["box"]
    if len(box) != 4:
        raise ConfigError("box must be [xlo, xhi, ylo, yhi]")

    m_raw = raw["m"]
    m_list = [int(m_raw)] if np.isscalar(m_raw) else [int(m) for m in m_raw]
    if not m_list:
        raise ConfigError("grid size list is empty")
    for a, b in zip(m_list, m_list[1:]):
        if b != 2 * a:
            raise ConfigError(
                f"convergence grid sizes must double at each level, got {a} → {b}"
            )

    gamma = float(raw.get("gamma", 0.8))
    if not 0.0 < gamma < 1.0:
        raise ConfigError(f"iteration parameter γ must lie strictly in (0,1), got {gamma}")
    tol = float(raw.get("tol", 1e-8))
    if tol <= 0:
        raise ConfigError(f"tolerance must be positive, got {tol}")

    theta = float(raw.get("theta", 0.25))
    if equation == "wave" and theta < 0.25 and not raw.get("allow_cfl_risk", False):
        raise ConfigError(
            f"θ = {theta} < 0.25 is only conditionally stable; "
            "set allow_cfl_risk = true to run it anyway"
        )

    solution = raw.get("solution", _DEFAULT_SOLUTIONS[equation])
    if solution != _DEFAULT_SOLUTIONS[equation]:
        raise ConfigError(
            f"solution {solution!r} does not solve the {equation} equation; "
            f"expected {_DEFAULT_SOLUTIONS[equation]!r}"
        )

    return RunConfig(
        equation=equation,
        bc=bc,
        curve=dict(raw["curve"]),
        box=tuple(float(v) for v in box),
        m_list=m_list,
        tau0=float(raw["tau"]),
        t_final=float(raw["t_final"]),
        solution=solution,
        c=float(raw.get("c", 1.0)),
        theta=theta,
        w=float(raw.get("w", 1.0)),
        splitting=raw.get("splitting", "strang"),
        phase=float(raw.get("phase", 0.0)),
        allow_cfl_risk=bool(raw.get("allow_cfl_risk", False)),
        blowup_threshold=float(raw.get("blowup_threshold", 1e10)),
        gamma=gamma,
        tol=tol,
        max_iter=int(raw.get("max_iter", 200)),
        backend=raw.get("backend", "serial"),
        backends=list(raw.get("backends", [])),
        snapshots=[float(s) for s in raw.get("snapshots", [])],
        out_dir=raw.get("out_dir", "out"),
        figures=bool(raw.get("figures", True)),
    )


def load_config(path):
    """Parse and validate a TOML run configuration."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path} does not parse: {exc}")
    return _validate(raw)


def build_curve(cfg):
    params = dict(cfg.curve)
    kind = params.pop("kind", None)
    if kind is None:
        raise ConfigError("curve table needs a 'kind' key")
    return make_curve(kind, **params)


def build_solution(cfg):
    if cfg.equation == "heat":
        return HeatPlaneDecay(c=cfg.c)
    if cfg.equation == "wave":
        return WaveStanding(phase=cfg.phase)
    return SchrodingerPhaseRotation()


def build_problem_spec(cfg, tau, solution=None):
    """ProblemSpec for one grid level of this configuration."""
    sol = solution if solution is not None else build_solution(cfg)
    g = sol.neumann if cfg.bc == "neumann" else sol.dirichlet
    kwargs = dict(
        equation=cfg.equation,
        bc_kind=cfg.bc,
        g=g,
        u0=sol.u0,
        lap_u0=sol.lap_u0,
        tau=tau,
        t_final=cfg.t_final,
        gamma=cfg.gamma,
        tol=cfg.tol,
        max_iter=cfg.max_iter,
        blowup_threshold=cfg.blowup_threshold,
        allow_cfl_risk=cfg.allow_cfl_risk,
    )
    if cfg.equation == "heat":
        kwargs["c"] = cfg.c
    elif cfg.equation == "wave":
        kwargs.update(theta=cfg.theta, v0=sol.v0, lap_v0=sol.lap_v0)
    else:
        kwargs.update(w=cfg.w, potential=sol.potential, splitting=cfg.splitting)
    return ProblemSpec(**kwargs)
