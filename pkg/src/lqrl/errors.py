"""Exception types shared across the package."""

import numpy as np


class DimensionError(ValueError):
    """Array shapes do not fit together."""


class DomainError(ValueError):
    """An argument lies outside the region where the operation is defined."""


class SingularityError(np.linalg.LinAlgError):
    """A matrix that must be inverted is (numerically) singular."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class ConvergenceError(RuntimeError):
    """An iterative solver ran out of iterations."""


class ConfigurationError(ValueError):
    """A configuration value or combination is invalid."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class NumericError(FloatingPointError):
    """A non-finite value appeared during a computation."""

    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer
