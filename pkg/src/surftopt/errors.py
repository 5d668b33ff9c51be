"""Exception hierarchy.

Every error carries the process exit code the command line front end maps
it to, so that ``run`` can translate failures without a lookup table.
"""


class SurftoptError(Exception):
    exit_code = 1


class ConfigError(SurftoptError, ValueError):
    exit_code = 2

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class CoefficientError(ConfigError):
    """Problem coefficients violate positivity/weight invariants."""


class UnsupportedConfigurationError(ConfigError):
    """Requested configuration has no closed-form topological derivative."""


class HypothesisViolationError(SurftoptError, ValueError):
    """A perturbation study was asked to leave its region of validity."""

    exit_code = 2


class MeshError(SurftoptError, ValueError):
    exit_code = 3


class MeshResourceError(MeshError):
    pass


class OffParseError(MeshError):
    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


class OpenSurfaceError(MeshError):
    pass


class BindingError(MeshError):
    """A field does not belong to the mesh it is used with."""


class SolverError(SurftoptError, RuntimeError):
    exit_code = 4


class ConvergenceError(SolverError):
    def __init__(self, message, residual, iterations):
        super().__init__(f"{message} (relative residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


class OptimizerError(SurftoptError, RuntimeError):
    exit_code = 5


class DegenerateDescentError(OptimizerError):
    """The generalized topological derivative vanishes identically."""


class AntipodalDegeneracyError(OptimizerError):
    """Level set and descent direction are exactly opposite; SLERP is undefined."""


class AlreadyStationary(OptimizerError):
    """Raised as a signal when the level set is already aligned with the descent direction."""


class OutputError(SurftoptError, OSError):
    exit_code = 6
