"""Exception hierarchy shared by all modules."""


class LtcError(Exception):
    """Base class for every error raised by ltcnet."""


class ParameterError(LtcError, ValueError):
    """Invalid parameter value or inconsistent shapes."""


class SingularityError(LtcError, ArithmeticError):
    """A denominator vanished or changed sign.

    ``index`` holds the offending coordinate when known.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class OverflowStateError(LtcError, ArithmeticError):
    """A solver produced a non-finite state."""

    def __init__(self, message, index=None, time_index=None):
        super().__init__(message)
        self.index = index
        self.time_index = time_index


class StiffnessError(LtcError, RuntimeError):
    """The adaptive step size collapsed below the allowed minimum."""


class DegenerateInputError(LtcError, ValueError):
    """Input data carries no usable variation."""


class ContractError(LtcError, ValueError):
    """A call falls outside the hypotheses an operation is defined for."""


class UsageError(LtcError, ValueError):
    """Mismatched objects were combined, e.g. a cache from another config."""
