"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration problems are usage
errors (1), anything about the data on disk or its content is a data
error (2), and non-finite numbers are numeric failures (3).
"""


class SeganetError(Exception):
    """Base class for all package errors."""


class ConfigError(SeganetError, ValueError):
    """Invalid model, training, augmentation or phantom configuration."""


class ShapeError(SeganetError, ValueError):
    """Tensor or array dimensions do not satisfy an operation's contract."""


class GraphError(SeganetError, RuntimeError):
    """Misuse of the autodiff graph (e.g. a second backward pass)."""


class NumericError(SeganetError, ArithmeticError):
    """A NaN or Inf appeared where finite values are required."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class DataError(SeganetError):
    """Malformed container, manifest, checkpoint or dataset content."""


class SliceSelectionError(DataError):
    """Atrial slices cannot be located from the ventricular presence flags."""


class LandmarkError(DataError):
    """Cycle landmarks cannot be detected on a volume curve."""


class UndefinedMetricError(SeganetError, ValueError):
    """A distance metric was requested for an empty mask."""
