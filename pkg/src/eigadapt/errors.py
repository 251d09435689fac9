"""Exception types shared across the package."""


class CoefficientError(ValueError):
    """A coefficient field violated its contract (non-SPD D or rho <= 0)."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class MeshError(Exception):
    """A mesh operation failed or an invariant was violated."""


class GeometryError(MeshError):
    """Invalid or inconsistent domain geometry."""


class LocateError(MeshError):
    """Point location failed; carries the nearest boundary triangle."""

    def __init__(self, message, nearest_triangle=-1):
        super().__init__(message)
        self.nearest_triangle = nearest_triangle


class RemeshError(MeshError):
    """The remesher could not produce a valid mesh."""

    def __init__(self, message, mesh=None):
        super().__init__(message)
        self.mesh = mesh


class RecoveryError(Exception):
    """Hessian recovery failed at a vertex."""

    def __init__(self, message, vertex=-1):
        super().__init__(message)
        self.vertex = vertex


class SolveError(Exception):
    """Numeric failure in the algebraic eigenvalue solve."""


class ConvergenceError(SolveError):
    """Eigensolver did not reach the requested tolerance.

    Carries the best iterate found so far.
    """

    def __init__(self, message, eigenvalues=None, eigenvectors=None,
                 residuals=None):
        super().__init__(message)
        self.eigenvalues = eigenvalues
        self.eigenvectors = eigenvectors
        self.residuals = residuals


class PgmError(ValueError):
    """Malformed PGM input; carries the byte offset of the defect."""

    def __init__(self, message, offset=0):
        super().__init__("%s (byte %d)" % (message, offset))
        self.offset = offset


class ConfigError(ValueError):
    """Invalid run configuration."""
