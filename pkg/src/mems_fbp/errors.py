"""Exception hierarchy shared by the solver modules."""


class MemsError(Exception):
    """Base class for all package errors."""


class InvalidGridError(MemsError, ValueError):
    """Grid too small (or otherwise malformed) for the requested operation."""


class DegenerateDomainError(MemsError):
    """The membrane touches or crosses the ground plate (1 + v <= 0)."""

    def __init__(self, message, min_gap=None):
        super().__init__(message)
        self.min_gap = min_gap


class SolverFailure(MemsError):
    """A linear or nonlinear solve did not produce a usable answer."""

    def __init__(self, message, condition_estimate=None):
        super().__init__(message)
        self.condition_estimate = condition_estimate


class InsufficientDataError(MemsError):
    """Too few samples to evaluate a diagnostic."""
