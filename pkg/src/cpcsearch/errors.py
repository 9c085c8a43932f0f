"""Exception types shared across the package."""


class CapacityError(ValueError):
    """An enumeration was asked to run above its node cap."""


class DegenerateCovarianceError(ArithmeticError):
    """A correlation submatrix is singular (or numerically so)."""


class DegreesOfFreedomError(ValueError):
    """Too few samples for the size of the conditioning set."""


class InconsistentStateError(RuntimeError):
    """Search bookkeeping is internally inconsistent (e.g. a missing sepset)."""
