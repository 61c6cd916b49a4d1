"""Implicit time stepping for the heat, wave, and Schrödinger equations.

Every scheme reduces one time step to a single modified-Helmholtz BVP
    Δu^{n+1} − κ u^{n+1} = −F^{n+1}
and maintains F by algebraic recurrences instead of ever applying a discrete
Laplacian to a stored solution (which is numerically unstable on the
irregular domain):

  heat  (c·u_t = Δu, Crank–Nicolson):  κ = 2c/τ,
        F¹ = (2c/τ)u⁰ + Δu⁰,  F^{n+2} = (4c/τ)u^{n+1} − F^{n+1}
  wave  (u_tt = Δu, implicit θ-scheme):  κ = 1/(θτ²),
        F^{n+1} = (2u^n − u^{n−1})/(θτ²) + ((1−2θ)/θ)Δu^n + Δu^{n−1}
        with Δu recovered from Δu^k = κu^k − F^k; at θ = ¼ this collapses to
        F^{n+2} = (16/τ²)u^{n+1} − 2F^{n+1} − F^n
  Schrödinger (i·u_t = Δu + v·u + w|u|²u, Strang splitting A(τ/2)B(τ)A(τ/2)
        with A the Laplacian flow and B the pointwise phase flow):
        u* = 2u^n − u**_{prev} (eliminating Δu^n algebraically; the first
        step uses the analytic Δu⁰), nonlinear pointwise solve for u**, then
        one backward half-step with κ = 2i/τ. Godunov splitting is B(τ)
        followed by a backward full step with κ = i/τ.

The same recurrences run at the control points (with boundary traces taken
from the Dirichlet data, or from extraction for Neumann runs) so the jump
system's f_Γ is always available without one-sided extrapolation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bvp import BvpProblem, OneSidedExtractor, TraceExtractor, richardson_solve
from .engine import KernelSpec, make_backend
from .errors import ConfigError, ConvergenceError, InstabilityError
from .interface import InterfaceWorkspace

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 50

EQUATIONS = ("heat", "wave", "schrodinger")


@dataclass
class ProblemSpec:
    """Definition of one evolution run on a fixed domain.

    g supplies the boundary data at the control points: g(x, y, t) for
    Dirichlet runs, g(x, y, t, normal) for Neumann runs (normal has shape
    (m, 2)). The startup callables (lap_u0, and v0/lap_v0 for the wave) must
    be the closed-form expressions; the schemes never discretize a Laplacian.
    """

    equation: str
    bc_kind: str
    g: callable
    u0: callable
    lap_u0: callable = None
    tau: float = 0.1
    t_final: float = 1.0
    c: float = 1.0                 # heat scale factor
    theta: float = 0.25            # wave scheme weight
    w: float = 1.0                 # Schrödinger nonlinearity strength
    potential: callable = None     # Schrödinger v(x,y)
    splitting: str = "strang"
    v0: callable = None            # wave ∂_t u(·,0)
    lap_v0: callable = None
    gamma: float = 0.8
    tol: float = 1e-8
    max_iter: int = 200
    blowup_threshold: float = 1e10
    allow_cfl_risk: bool = False

    def __post_init__(self):
        if self.equation not in EQUATIONS:
            raise ConfigError(f"unknown equation {self.equation!r}; expected one of {EQUATIONS}")
        if self.bc_kind not in ("dirichlet", "neumann"):
            raise ConfigError(f"unknown boundary condition kind {self.bc_kind!r}")
        if self.tau <= 0:
            raise ConfigError(f"time step τ must be positive, got {self.tau}")
        if self.t_final < 0:
            raise ConfigError(f"final time must be ≥ 0, got {self.t_final}")
        if self.blowup_threshold <= 0:
            raise ConfigError("blow-up threshold must be positive")
        if self.equation == "heat" and self.c <= 0:
            raise ConfigError(f"heat scale factor c must be positive, got {self.c}")
        if self.equation == "wave":
            if not 0.0 < self.theta <= 0.5:
                raise ConfigError(f"θ must lie in (0, 0.5], got {self.theta}")
            if self.theta < 0.25 and not self.allow_cfl_risk:
                raise ConfigError(
                    f"θ = {self.theta} < 0.25 is only conditionally stable; "
                    "set allow_cfl_risk = true to run it anyway"
                )
            if self.v0 is None or self.lap_v0 is None or self.lap_u0 is None:
                raise ConfigError("wave startup needs closed-form u0, v0, Δu0 and Δv0")
        if self.equation == "schrodinger":
            if self.w < 0:
                raise ConfigError(f"nonlinearity strength w must be ≥ 0, got {self.w}")
            if self.potential is None:
                raise ConfigError("schrodinger runs need a potential v(x,y)")
            if self.splitting not in ("strang", "godunov"):
                raise ConfigError(f"unknown splitting {self.splitting!r}")
            if self.bc_kind != "dirichlet":
                raise ConfigError("schrodinger stepping supports dirichlet data only")
            if self.lap_u0 is None:
                raise ConfigError("schrodinger startup needs closed-form Δu0")

    def n_steps(self):
        steps = self.t_final / self.tau
        n = int(round(steps))
        if abs(steps - n) > 1e-9 * max(1.0, abs(steps)):
            raise ConfigError(
                f"final time {self.t_final} is not an integer multiple of τ = {self.tau}"
            )
        return n


@dataclass
class TimeState:
    """Rolling state of one evolution; fields unused by an equation stay None."""

    n: int
    t: float
    u: np.ndarray
    density: np.ndarray = None        # Richardson warm start
    F: np.ndarray = None              # heat/wave F^{n+1} (data of the next solve)
    f_gamma: np.ndarray = None
    trace: np.ndarray = None          # boundary values u_Γ at the current level
    u_prev: np.ndarray = None         # wave u^n while u holds u^{n+1}
    F_prev: np.ndarray = None         # wave F^n
    f_gamma_prev: np.ndarray = None
    carry: np.ndarray = None          # Schrödinger u** from the last step
    carry_gamma: np.ndarray = None
    last_iterations: int = 0
    last_residual: float = 0.0


class StepContext:
    """Grid and boundary machinery shared by all steps of one run."""

    def __init__(self, geometry, backend=None, n_controls=None):
        self.backend = backend if hasattr(backend, "dispatch") else make_backend(backend)
        self.geometry = geometry
        self.workspace = InterfaceWorkspace(geometry, n_controls=n_controls,
                                            backend=self.backend)
        self.extractor = TraceExtractor(self.workspace)
        self._neumann_extractor = None
        self.grid = geometry.grid
        self.mask = geometry.classification.interior
        cps = self.workspace.cps
        self.zx, self.zy = cps.x, cps.y
        self.normal = cps.normal

    def extractor_for(self, bc_kind):
        if bc_kind == "dirichlet":
            return self.extractor
        if self._neumann_extractor is None:
            self._neumann_extractor = OneSidedExtractor(self.workspace)
        return self._neumann_extractor

    def interior_field(self, fn):
        """Evaluate fn(x, y) at interior nodes, zero elsewhere."""
        vals = np.asarray(fn(self.grid.X, self.grid.Y))
        return np.where(self.mask, vals, np.zeros((), dtype=vals.dtype))

    def bc_values(self, spec, t):
        if spec.bc_kind == "neumann":
            return np.asarray(spec.g(self.zx, self.zy, t, self.normal))
        return np.asarray(spec.g(self.zx, self.zy, t))

    def check_stable(self, state, spec):
        norm = float(np.max(np.abs(state.u)))
        if norm > spec.blowup_threshold:
            raise InstabilityError(state.n, state.t, norm, spec.blowup_threshold)


def _solve_step(ctx, spec, kappa, F, f_gamma, bc_values, density):
    """The BVP of one step is Δu − κu = −F; traces close the recurrences."""
    problem = BvpProblem(
        kappa=kappa,
        F=-F,
        f_gamma=-f_gamma,
        bc_kind=spec.bc_kind,
        bc_values=bc_values,
        gamma=spec.gamma,
        tol=spec.tol,
        max_iter=spec.max_iter,
        initial_density=density,
    )
    return richardson_solve(problem, ctx.workspace, backend=ctx.backend,
                            extractor=ctx.extractor_for(spec.bc_kind))


def _rhs_update(ctx, chunk_fn, n_items):
    """Run an F-recurrence (or similar per-node update) through the engine."""
    ctx.backend.dispatch(KernelSpec("rhs-update", n_items, 65536), chunk_fn)


# ---------------------------------------------------------------------------
# heat

def heat_startup(spec, ctx):
    u0 = ctx.interior_field(spec.u0)
    lap0 = ctx.interior_field(spec.lap_u0)
    a = 2.0 * spec.c / spec.tau
    F = a * u0 + lap0
    f_gamma = a * spec.u0(ctx.zx, ctx.zy) + spec.lap_u0(ctx.zx, ctx.zy)
    return TimeState(n=0, t=0.0, u=u0, F=F, f_gamma=f_gamma)


def heat_step(state, spec, ctx):
    """One Crank–Nicolson step: BVP solve with κ = 2c/τ, then F-recurrence."""
    kappa = 2.0 * spec.c / spec.tau
    t_next = state.t + spec.tau
    sol = _solve_step(ctx, spec, kappa, state.F, state.f_gamma,
                      ctx.bc_values(spec, t_next), state.density)
    u_next = np.where(ctx.mask, sol.u, 0.0)

    a = 4.0 * spec.c / spec.tau
    F_old = state.F
    F_new = np.zeros_like(F_old)

    def recur(start, stop):
        sl = slice(start, stop)
        F_new.ravel()[sl] = a * u_next.ravel()[sl] - F_old.ravel()[sl]

    _rhs_update(ctx, recur, F_new.size)

    trace = ctx.bc_values(spec, t_next) if spec.bc_kind == "dirichlet" else sol.trace_u
    f_gamma_new = a * trace - state.f_gamma

    return TimeState(
        n=state.n + 1, t=t_next, u=u_next, density=sol.density,
        F=F_new, f_gamma=f_gamma_new, trace=trace,
        last_iterations=sol.iterations, last_residual=sol.residual,
    )


# ---------------------------------------------------------------------------
# wave

def wave_startup(spec, ctx):
    """Taylor start: u¹ = u⁰ + τv₀ + (τ²/2)Δu₀ with Δu¹ ≈ Δu₀ + τΔv₀.

    Produces the state holding (u¹, u⁰) and (F², F¹); stepping proceeds from
    n = 1. All startup fields use the supplied closed-form callables, and the
    one-step error is O(τ³) so the global order is unaffected.
    """
    tau, theta = spec.tau, spec.theta
    kw = 1.0 / (theta * tau**2)
    coef = (1.0 - 2.0 * theta) / theta

    u0 = ctx.interior_field(spec.u0)
    v0 = ctx.interior_field(spec.v0)
    lap_u0 = ctx.interior_field(spec.lap_u0)
    lap_v0 = ctx.interior_field(spec.lap_v0)
    u1 = u0 + tau * v0 + 0.5 * tau**2 * lap_u0
    lap_u1 = lap_u0 + tau * lap_v0
    F1 = kw * u1 - lap_u1
    F2 = (2.0 * u1 - u0) * kw + coef * lap_u1 + lap_u0

    zx, zy = ctx.zx, ctx.zy
    g_u0 = spec.u0(zx, zy)
    g_lap_u0 = spec.lap_u0(zx, zy)
    g_u1 = g_u0 + tau * spec.v0(zx, zy) + 0.5 * tau**2 * g_lap_u0
    g_lap_u1 = g_lap_u0 + tau * spec.lap_v0(zx, zy)
    fg1 = kw * g_u1 - g_lap_u1
    fg2 = (2.0 * g_u1 - g_u0) * kw + coef * g_lap_u1 + g_lap_u0

    return TimeState(
        n=1, t=tau, u=u1, u_prev=u0, trace=g_u1,
        F=F2, F_prev=F1, f_gamma=fg2, f_gamma_prev=fg1,
    )


def wave_step(state, spec, ctx):
    """One implicit θ-step; Δu of past levels is recovered algebraically."""
    tau, theta = spec.tau, spec.theta
    kw = 1.0 / (theta * tau**2)
    t_next = state.t + tau
    sol = _solve_step(ctx, spec, kw, state.F, state.f_gamma,
                      ctx.bc_values(spec, t_next), state.density)
    u_next = np.where(ctx.mask, sol.u, 0.0)

    coef = (1.0 - 2.0 * theta) / theta
    u_curr, F_curr, F_prev = state.u, state.F, state.F_prev
    F_new = np.zeros_like(F_curr)

    def recur(start, stop):
        sl = slice(start, stop)
        un, uc = u_next.ravel()[sl], u_curr.ravel()[sl]
        fc, fp = F_curr.ravel()[sl], F_prev.ravel()[sl]
        # Δu^{n+1} = κu^{n+1} − F^{n+1} and Δu^n = κu^n − F^n
        F_new.ravel()[sl] = (2.0 * un - uc) * kw + coef * (kw * un - fc) + (kw * uc - fp)

    _rhs_update(ctx, recur, F_new.size)

    g_next = ctx.bc_values(spec, t_next) if spec.bc_kind == "dirichlet" else sol.trace_u
    g_curr = state.trace
    fg_new = (2.0 * g_next - g_curr) * kw \
        + coef * (kw * g_next - state.f_gamma) + (kw * g_curr - state.f_gamma_prev)

    next_state = TimeState(
        n=state.n + 1, t=t_next, u=u_next, u_prev=state.u, density=sol.density,
        F=F_new, F_prev=state.F, f_gamma=fg_new, f_gamma_prev=state.f_gamma,
        trace=g_next,
        last_iterations=sol.iterations, last_residual=sol.residual,
    )
    ctx.check_stable(next_state, spec)
    return next_state


# ---------------------------------------------------------------------------
# Schrödinger

def nonlinear_phase_step(values, v_vals, w, half_tau):
    """Pointwise solve of u** + ic(v + w|u**|²)u** = u* − ic(v + w|u*|²)u*
    with c = τ/2, by damped Newton on the two real components per node.

    The map preserves |u| node-by-node; the Newton guess is u* itself, so
    convergence typically takes 2–4 iterations.
    """
    ustar = np.asarray(values, dtype=complex)
    if ustar.size == 0:
        return ustar
    c = half_tau
    rhs = ustar - 1j * c * (v_vals + w * np.abs(ustar) ** 2) * ustar
    r1, r2 = rhs.real.copy(), rhs.imag.copy()

    def residual(a, b):
        nv = v_vals + w * (a * a + b * b)
        return a - c * nv * b - r1, b + c * nv * a - r2

    a = ustar.real.copy()
    b = ustar.imag.copy()
    g1, g2 = residual(a, b)
    res = np.maximum(np.abs(g1), np.abs(g2))
    for _ in range(NEWTON_MAX_ITER):
        active = res > NEWTON_TOL
        if not np.any(active):
            break
        nv = v_vals + w * (a * a + b * b)
        j11 = 1.0 - 2.0 * c * w * a * b
        j12 = -c * nv - 2.0 * c * w * b * b
        j21 = c * nv + 2.0 * c * w * a * a
        j22 = 1.0 + 2.0 * c * w * a * b
        det = j11 * j22 - j12 * j21
        da = (j22 * g1 - j12 * g2) / det
        db = (j11 * g2 - j21 * g1) / det
        step = np.where(active, 1.0, 0.0)
        for _halving in range(30):
            a_new = a - step * da
            b_new = b - step * db
            g1, g2 = residual(a_new, b_new)
            res_new = np.maximum(np.abs(g1), np.abs(g2))
            worse = active & (res_new > res)
            if not np.any(worse):
                break
            step = np.where(worse, 0.5 * step, step)
        a, b, res = a_new, b_new, res_new
    if np.any(res > NEWTON_TOL):
        raise ConvergenceError(
            f"pointwise Newton solve stalled at residual {res.max():.3e}",
            iterations=NEWTON_MAX_ITER,
            last_residual=float(res.max()),
        )
    return a + 1j * b


def schrodinger_startup(spec, ctx):
    u0 = ctx.interior_field(spec.u0).astype(complex)
    return TimeState(n=0, t=0.0, u=u0)


def _schrodinger_common(state, spec, ctx, kappa, ustar, ustar_gamma, t_next):
    """Nonlinear substep plus backward linear solve, shared by both splittings."""
    v_grid = np.where(ctx.mask, spec.potential(ctx.grid.X, ctx.grid.Y), 0.0)
    v_gamma = spec.potential(ctx.zx, ctx.zy)
    half_tau = 0.5 * spec.tau

    flat = ustar.ravel()
    v_flat = v_grid.ravel()
    ustar2 = np.empty(flat.size, dtype=complex)

    def newton_chunk(start, stop):
        sl = slice(start, stop)
        ustar2[sl] = nonlinear_phase_step(flat[sl], v_flat[sl], spec.w, half_tau)

    ctx.backend.dispatch(KernelSpec("rhs-update", flat.size, 65536), newton_chunk)
    ustar2 = np.where(ctx.mask, ustar2.reshape(ustar.shape), 0.0)
    ustar2_gamma = nonlinear_phase_step(ustar_gamma, v_gamma, spec.w, half_tau)

    # backward Euler sub-step: Δu − κu = −κu**
    F = kappa * ustar2
    f_gamma = kappa * ustar2_gamma
    sol = _solve_step(ctx, spec, kappa, F, f_gamma,
                      ctx.bc_values(spec, t_next), state.density)
    u_next = np.where(ctx.mask, sol.u, 0.0)
    return sol, u_next, ustar2, ustar2_gamma


def schrodinger_step(state, spec, ctx):
    """Strang step A(τ/2)·B(τ)·A(τ/2); the opening half-step is eliminated
    against the previous closing half-step via u* = 2u^n − u**_prev."""
    tau = spec.tau
    kappa = 2j / tau
    t_next = state.t + tau

    if state.carry is None:
        lap0 = ctx.interior_field(spec.lap_u0).astype(complex)
        ustar = state.u - 0.5j * tau * lap0
        ustar_gamma = np.asarray(spec.u0(ctx.zx, ctx.zy), dtype=complex) \
            - 0.5j * tau * np.asarray(spec.lap_u0(ctx.zx, ctx.zy))
    else:
        ustar = 2.0 * state.u - state.carry
        g_curr = ctx.bc_values(spec, state.t).astype(complex)
        ustar_gamma = 2.0 * g_curr - state.carry_gamma

    sol, u_next, carry, carry_gamma = _schrodinger_common(
        state, spec, ctx, kappa, ustar, ustar_gamma, t_next
    )
    next_state = TimeState(
        n=state.n + 1, t=t_next, u=u_next, density=sol.density,
        carry=carry, carry_gamma=carry_gamma,
        last_iterations=sol.iterations, last_residual=sol.residual,
    )
    ctx.check_stable(next_state, spec)
    return next_state


def godunov_step(state, spec, ctx):
    """First-order splitting B(τ) then A(τ): no elimination carry, full-τ
    backward solve with κ = i/τ."""
    tau = spec.tau
    kappa = 1j / tau
    t_next = state.t + tau

    ustar = np.asarray(state.u, dtype=complex)
    ustar_gamma = ctx.bc_values(spec, state.t).astype(complex)

    sol, u_next, _, _ = _schrodinger_common(
        state, spec, ctx, kappa, ustar, ustar_gamma, t_next
    )
    next_state = TimeState(
        n=state.n + 1, t=t_next, u=u_next, density=sol.density,
        last_iterations=sol.iterations, last_residual=sol.residual,
    )
    ctx.check_stable(next_state, spec)
    return next_state


# ---------------------------------------------------------------------------
# driver

@dataclass
class RunResult:
    state: TimeState
    iterations: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    kernel_times: dict = field(default_factory=dict)
    kernel_calls: dict = field(default_factory=dict)


def _stepper_for(spec):
    if spec.equation == "heat":
        return heat_startup, heat_step
    if spec.equation == "wave":
        return wave_startup, wave_step
    if spec.splitting == "godunov":
        return schrodinger_startup, godunov_step
    return schrodinger_startup, schrodinger_step


def run(spec, geometry, backend=None, snapshot_times=(), n_controls=None):
    """Advance from t = 0 to t_final; returns the final state plus per-step
    Richardson iteration counts, requested field snapshots, and accumulated
    per-kernel wall times."""
    ctx = StepContext(geometry, backend=backend, n_controls=n_controls)
    startup, step = _stepper_for(spec)
    n_steps = spec.n_steps()

    snap_steps = {}
    for s in snapshot_times:
        k = int(round(s / spec.tau))
        if abs(k * spec.tau - s) > 1e-9 * max(1.0, abs(s)):
            raise ConfigError(f"snapshot time {s} is not a multiple of τ = {spec.tau}")
        snap_steps.setdefault(k, s)

    result = RunResult(state=None)
    u0 = ctx.interior_field(spec.u0)
    if 0 in snap_steps:
        result.snapshots.append((snap_steps[0], u0.copy()))
    if n_steps == 0:
        result.state = TimeState(n=0, t=0.0, u=u0)
        result.kernel_times = dict(ctx.backend.timings)
        result.kernel_calls = dict(ctx.backend.calls)
        return result

    state = startup(spec, ctx)
    ctx.check_stable(state, spec)
    if state.n > 0 and state.n in snap_steps:
        result.snapshots.append((snap_steps[state.n], state.u.copy()))

    while state.n < n_steps:
        state = step(state, spec, ctx)
        ctx.check_stable(state, spec)
        result.iterations.append(state.last_iterations)
        if state.n in snap_steps:
            result.snapshots.append((snap_steps[state.n], state.u.copy()))

    result.state = state
    result.kernel_times = dict(ctx.backend.timings)
    result.kernel_calls = dict(ctx.backend.calls)
    return result
