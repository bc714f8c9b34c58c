class DirtailError(Exception):
    """Base class for library errors."""


class DomainError(DirtailError, ValueError):
    """An argument lies outside the domain of the operation."""


class DegenerateDistributionError(DomainError):
    """The distribution charges a single support value."""


class InfeasibleError(DirtailError):
    """No candidate satisfies the constraint."""


class ConvergenceError(DirtailError, ArithmeticError):
    """A numerical routine failed to reach its tolerance."""


class EmptySampleError(DomainError):
    """An operation received no observations."""
