"""Exception types shared across the package."""


class HypomimiaError(Exception):
    """Base class for all package errors."""


class ShapeError(HypomimiaError, ValueError):
    pass


class DegenerateVectorError(HypomimiaError, ValueError):
    pass


class NumericError(HypomimiaError, ArithmeticError):
    """A loss or intermediate value became NaN or infinite."""


class InputError(HypomimiaError, ValueError):
    pass


class ConfigError(HypomimiaError, ValueError):
    pass


class FormatError(HypomimiaError, ValueError):
    """Malformed on-disk data. ``offset`` is the byte offset where parsing failed."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset
