"""Exception hierarchy shared across the package.

The CLI maps ``DataError`` to exit code 2 and every other ``BtDecayError``
to exit code 3.
"""


class BtDecayError(Exception):
    """Base class for all package errors."""


class DataError(BtDecayError, ValueError):
    """Malformed, inconsistent or insufficient input data."""


class InsufficientDataError(DataError):
    """A requested window or estimation sample has too few observations."""


class UndefinedMetricError(BtDecayError, ArithmeticError):
    """A metric is mathematically undefined for the given input (e.g. zero volatility)."""


class EstimationError(BtDecayError, RuntimeError):
    """An estimator could not be computed (collinearity, degenerate design, ...)."""
