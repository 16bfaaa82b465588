"""Exception hierarchy shared by the solver modules."""


class RDROError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(RDROError, ValueError):
    """Array shapes do not agree."""


class DomainError(RDROError, ValueError):
    """An argument lies outside the domain of an operator."""


class NumericalRangeError(RDROError, ArithmeticError):
    """A computation overflowed, underflowed or produced a non-finite value."""


class ConfigurationError(RDROError, ValueError):
    """A decision set or solver configuration is invalid or empty."""


class CapacityError(RDROError, ValueError):
    """An instance is too large for an exhaustive routine."""


class BracketError(RDROError, ValueError):
    """A penalty bracket does not straddle the requested tolerance."""


class InfeasibleError(RDROError, ValueError):
    """A transportation problem has less supply than demand.

    The shortfall is stored on ``deficit``.
    """

    def __init__(self, message, deficit):
        super().__init__(message)
        self.deficit = deficit
