"""Kernel-free boundary integral solver on Cartesian grids.

Solves Dirichlet/Neumann BVPs of the modified Helmholtz equation on smooth
irregular 2D domains by Richardson iteration on second-kind boundary
integral equations, with the potentials evaluated through corrected
interface problems and an FFT-diagonalized box solver. Implicit time
steppers (Crank–Nicolson heat, implicit-θ wave, split-step Schrödinger)
reduce each time step to one such solve.
"""

from .boxsolve import BoxProblem, BoxSolver, apply_box_operator, solve_box
from .bvp import (
    BvpProblem,
    BvpSolution,
    OneSidedExtractor,
    TraceExtractor,
    extract_trace,
    richardson_solve,
)
from .engine import (
    DEFAULT_CHUNK_SIZE,
    KERNEL_NAMES,
    Backend,
    KernelSpec,
    SerialBackend,
    WorkerBackend,
    make_backend,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    DispatchError,
    ExtractionError,
    GeometryError,
    GridError,
    InstabilityError,
    KfbiError,
)
from .geometry import (
    CircleCurve,
    ControlPointSet,
    EllipseCurve,
    SplineCurve,
    StarCurve,
    classify_point,
    control_points,
    differentiate_density,
    edge_intersection,
    evaluate,
    make_curve,
)
from .grid import CartesianGrid, GridGeometry, build_grid, neighbors
from .interface import (
    InterfaceData,
    InterfaceWorkspace,
    JumpSet,
    compute_jumps,
    corrections,
    interp_rows,
    jump_at_point,
    solve_interface,
)
from .config import RunConfig, build_curve, build_problem_spec, build_solution, load_config
from .report import (
    bench,
    compute_errors,
    convergence_study,
    dump_field,
    solve_run,
    write_manifest,
)
from .solutions import (
    HeatPlaneDecay,
    PiecewiseField,
    SchrodingerPhaseRotation,
    StaticPlaneWave,
    WaveStanding,
    make_solution,
)
from .timestepping import (
    ProblemSpec,
    RunResult,
    StepContext,
    TimeState,
    godunov_step,
    heat_startup,
    heat_step,
    nonlinear_phase_step,
    run,
    schrodinger_step,
    wave_startup,
    wave_step,
)

__version__ = "0.1.0"
