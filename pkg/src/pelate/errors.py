"""Exception hierarchy shared across the package.

Every error raised on a statistical or numerical code path derives from
:class:`PelateError`, so callers (bootstrap engine, simulation harness,
CLI) can distinguish recoverable estimation failures from programming
errors.
"""


class PelateError(Exception):
    """Base class for all estimation, solver and input errors."""


class ParseError(PelateError):
    """Malformed input file (bad header, non-numeric cell, bad flag)."""


class DegenerateDesignError(PelateError):
    """A treatment arm is empty or the design is otherwise unusable."""


class SingularDesignError(PelateError):
    """Design matrix is rank deficient on the relevant subsample."""


class ConvergenceError(PelateError):
    """An iterative solver failed to converge within its iteration cap."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []


class InfeasibleError(PelateError):
    """The requested constraint set admits no strictly positive solution."""


class DomainError(PelateError):
    """An input value lies outside the mathematical domain of an operation."""


class DegenerateScaleError(PelateError):
    """A scale factor came out non-positive (e.g. constant outcomes)."""


class SingularMatrixError(PelateError):
    """A matrix required to be invertible is numerically singular."""

    def __init__(self, message, matrix_name=None):
        super().__init__(message)
        self.matrix_name = matrix_name


class ExcessFailureError(PelateError):
    """Too many resampling or simulation replicates failed to be trusted."""


class UsageError(PelateError):
    """Invalid command-line or configuration usage (CLI exit code 2)."""
