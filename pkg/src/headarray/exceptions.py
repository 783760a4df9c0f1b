"""Exception hierarchy shared by all modules."""


class HeadArrayError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(HeadArrayError, ValueError):
    """An argument violates a documented precondition."""


class DegenerateInputError(InvalidArgumentError):
    """Input is well-formed but carries no usable information (e.g. all zeros, 0 Hz)."""


class NumericalError(HeadArrayError, ArithmeticError):
    """A numerical procedure failed to converge or produced non-finite output."""


class SingularMatrixError(NumericalError):
    """A matrix that must be inverted is numerically singular."""


class FormatError(HeadArrayError, ValueError):
    """A database file is malformed."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class CapacityError(HeadArrayError, ValueError):
    """A request would exceed a hard computational guard."""
