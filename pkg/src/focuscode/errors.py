"""Exception types shared across the package.

The CLI maps :class:`ConfigError` to exit code 2 and every other
:class:`FocusCodeError` to exit code 1.
"""


class FocusCodeError(Exception):
    """Base class for all package errors."""


class InvalidArgument(FocusCodeError, ValueError):
    pass


class PreconditionError(FocusCodeError, RuntimeError):
    pass


class NumericError(FocusCodeError, ArithmeticError):
    pass


class ConfigError(FocusCodeError, ValueError):
    pass


class DataError(FocusCodeError, ValueError):
    pass


class ParseError(DataError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
