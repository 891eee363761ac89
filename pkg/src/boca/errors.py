class BocaError(Exception):
    """Base class for errors raised by this package."""


class DomainError(BocaError, ValueError):
    """An argument lies outside the domain of the operation."""


class DegenerateStateError(BocaError, ArithmeticError):
    """A sampler state for which a conditional distribution is improper."""
