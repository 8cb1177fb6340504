"""Exception types raised across the package."""


class PxfemError(Exception):
    """Base class for all package errors."""


class DomainError(PxfemError, ValueError):
    """A point lies outside the computational domain."""


class GeometryError(PxfemError, ValueError):
    """Degenerate or invalid cell geometry."""


class MeshParseError(PxfemError, ValueError):
    """Malformed mesh file; ``line`` is 1-based or None for end of file."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)


class MeshValidationError(PxfemError, ValueError):
    """A triangulation violates one of its invariants."""


class SingularFluxError(PxfemError, ArithmeticError):
    """Flux derivative requested at xi = 0 with kappa = 0 and p < 2."""


class AdmissibilityError(PxfemError, ValueError):
    """Probe input violates the admissibility hypothesis of an estimate.

    ``cells`` (when set) lists the offending cell indices.
    """

    def __init__(self, message: str, cells=None):
        self.cells = cells
        super().__init__(message)


class SolverError(PxfemError, RuntimeError):
    """Nonlinear or linear solver failure; carries the last iterate and stats."""

    def __init__(self, message: str, iterate=None, stats=None):
        self.iterate = iterate
        self.stats = stats
        super().__init__(message)


class IndefiniteOperatorError(SolverError):
    """Conjugate gradients met a non-positive curvature direction."""


class StudyAborted(SolverError):
    """A convergence study stopped early; ``report`` holds the completed levels."""

    def __init__(self, message: str, report=None, iterate=None, stats=None):
        self.report = report
        super().__init__(message, iterate, stats)
