"""Exception hierarchy for the kfbi package.

Validation-class errors (bad config, bad geometry, bad grid) map to CLI exit
code 2; solver-failure errors (non-convergence, instability) map to exit 3.
"""


class KfbiError(Exception):
    """Base class for all package errors."""


class ConfigError(KfbiError):
    """Invalid or inconsistent run configuration."""


class GeometryError(KfbiError):
    """Degenerate or invalid boundary curve data."""


class GridError(KfbiError):
    """Grid construction failure (clearance, multi-crossing, bad M)."""


class ExtractionError(KfbiError):
    """Six-point trace stencil could not be formed or is ill-conditioned."""


class DispatchError(KfbiError):
    """A kernel work item failed inside a backend dispatch."""

    def __init__(self, kernel_name, message):
        super().__init__(f"kernel '{kernel_name}': {message}")
        self.kernel_name = kernel_name


class ConvergenceError(KfbiError):
    """Richardson iteration or Newton solve failed to converge."""

    def __init__(self, message, iterations=None, last_residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.last_residual = last_residual


class InstabilityError(KfbiError):
    """Numerical blow-up detected during time stepping."""

    def __init__(self, step, time, norm, threshold):
        super().__init__(
            f"solution norm {norm:.3e} exceeded blow-up threshold "
            f"{threshold:.3e} at step {step} (t={time:.6g})"
        )
        self.step = step
        self.time = time
        self.norm = norm
        self.threshold = threshold
