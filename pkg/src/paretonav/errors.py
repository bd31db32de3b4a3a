"""Exception types shared across the package."""


class ParetoNavError(Exception):
    """Base class for all package errors."""


class InvalidBoundsError(ParetoNavError, ValueError):
    """Hard bound is not strictly below the soft bound."""


class InvalidArgumentError(ParetoNavError, ValueError):
    """An argument violates an operation's preconditions."""


class DegenerateReferenceError(ParetoNavError, ValueError):
    """The reference optimum is not usable as a ratio denominator."""


class UnknownProblemError(ParetoNavError, KeyError):
    """Requested benchmark name is not registered."""


class SessionConflictError(ParetoNavError):
    """Session is not in the status required by the operation."""


class BudgetExhaustedError(ParetoNavError):
    """The interaction budget cannot afford another feedback event."""
