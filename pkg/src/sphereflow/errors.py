"""Exception types shared across the package."""


class SphereFlowError(Exception):
    """Base class for all package errors."""


class FormatError(SphereFlowError, ValueError):
    """A data file violates its format (bad header, counts, or fields)."""


class MeshError(SphereFlowError, ValueError):
    """Invalid mesh data (bad indices, degenerate triangles, ...)."""


class CoverageError(SphereFlowError, ValueError):
    """A query point is not covered by any face of the mesh."""


class NumericalError(SphereFlowError, RuntimeError):
    """Non-finite values appeared during assembly or solving."""
