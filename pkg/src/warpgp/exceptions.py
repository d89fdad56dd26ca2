"""Exception hierarchy shared by all modules."""


class WarpGPError(Exception):
    """Base class for errors raised by this package."""


class InvalidInputError(WarpGPError, ValueError):
    """Input arrays have the wrong shape, length or non-finite values."""


class NumericalFailure(WarpGPError, ArithmeticError):
    """A factorization or iterative solve did not succeed.

    ``jitter`` holds the last diagonal jitter attempted, when relevant.
    """

    def __init__(self, message, jitter=None):
        super().__init__(message)
        self.jitter = jitter


class RangeError(InvalidInputError):
    """Value lies outside the attainable range of a bounded warp."""


class DegenerateWarpError(NumericalFailure):
    """Warp derivative vanished or an inverse was requested outside its range."""


class FitFailure(NumericalFailure):
    """Every optimizer restart failed; ``diagnostics`` lists per-restart messages."""

    def __init__(self, message, diagnostics=()):
        super().__init__(message)
        self.diagnostics = list(diagnostics)


class InvalidStartError(NumericalFailure):
    """Objective was not finite at the initial point."""


class ScoringFailure(WarpGPError):
    """A regression fit failed while scoring a cause-effect pair."""

    def __init__(self, message, direction):
        super().__init__(message)
        self.direction = direction


class SchemaError(InvalidInputError):
    """A requested column is missing from a data file."""


class EmptyDatasetError(InvalidInputError):
    """No usable rows remain after dropping missing values."""


class DomainError(InvalidInputError):
    """A transform was applied outside its domain; ``rows`` lists offenders."""

    def __init__(self, message, rows=()):
        super().__init__(message)
        self.rows = list(rows)
