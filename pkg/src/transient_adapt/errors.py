"""Exception types raised across the package."""


class MeshStructureError(ValueError):
    """A mesh violates conformity, orientation or boundary invariants."""


class MeshFormatError(ValueError):
    """A mesh or metric file could not be parsed."""

    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


class PointNotFoundError(LookupError):
    """A query point lies outside the triangulated domain."""


class InsufficientPatchError(ValueError):
    """A recovery patch cannot furnish enough vertices for a quadratic fit."""


class SolverError(RuntimeError):
    """The linear solver failed to converge."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class AssemblyError(ValueError):
    """Finite element assembly met a degenerate element."""


class InsufficientDataError(ValueError):
    """Too few sweep points to fit a convergence slope."""


class AdaptationWarning(UserWarning):
    """The remesher stopped before reaching a quasi-unit mesh."""
