"""Exception types raised across the package."""

from __future__ import annotations


class HJNetError(Exception):
    """Base class for every error raised by hjnet."""


class InvalidArgument(HJNetError, ValueError):
    pass


class InvalidHamiltonian(HJNetError, ValueError):
    pass


class BelowMinimum(HJNetError, ValueError):
    """A level below the minimum of a Hamiltonian was requested."""


class SearchBoundExceeded(HJNetError, ArithmeticError):
    """A root or level-set search left its search window."""


class OutsideDomain(HJNetError, ValueError):
    pass


class CannotRegularize(HJNetError, ArithmeticError):
    pass


class InvalidState(HJNetError, ValueError):
    pass


class RejectedStep(HJNetError, ValueError):
    """A time step violates the CFL bound; ``required_dt`` holds the admissible step."""

    def __init__(self, message: str, required_dt: float):
        super().__init__(message)
        self.required_dt = required_dt


class MaxIterations(HJNetError, ArithmeticError):
    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class NotCoercive(HJNetError, ValueError):
    pass


class Infeasible(HJNetError, ValueError):
    pass


class RejectedConfig(HJNetError, ValueError):
    pass
