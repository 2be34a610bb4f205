"""Exception types shared across the package."""


class WitnessBoundsError(Exception):
    """Base class for all package errors."""


class InfeasibleError(WitnessBoundsError):
    """The relaxed model's constraint set is empty for the given distribution."""


class SolverError(WitnessBoundsError):
    """The LP solver stopped without a certificate of optimality or infeasibility."""


class PolytopeDegeneracyError(WitnessBoundsError):
    """Vertex/halfspace conversion failed its residual checks."""


class DataError(WitnessBoundsError):
    """Malformed input data (unknown column, non-binary cell, ...)."""


class GenerationError(WitnessBoundsError):
    """A synthetic model meeting the requested conditions was not found within the attempt cap."""
