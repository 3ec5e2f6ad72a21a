import logging
import traceback

_logger = logging.getLogger(__name__)

__all__ = ["logExceptionHelper", "OtomError", "DomainError", "ScheduleParseError", "ConfigError", "NumericError",
           "SingularityError", "PrecisionError", "DatasetFormatError", "WeightFormatError"]

ERROR_LEVELS = ("debug", "warning", "error", "raise")


def logExceptionHelper(message: str, level: str = "debug", exception=Exception):
    """
    Report a problem according to an errors= setting: '' or 'ignore' does
    nothing, a log level logs the message and 'raise' logs it as an error
    and raises the given exception type.
    """
    if level in ("", "ignore"):
        return
    if level not in ERROR_LEVELS:
        raise ValueError(f"The errors level must be one of {', '.join(ERROR_LEVELS)} or 'ignore', got: '{level}'")

    _logger.log(logging.ERROR if level == "raise" else getattr(logging, level.upper()), message)
    if level == "raise":
        raise exception(message)


class OtomError(Exception):
    """Base class for every error raised by pyotom. Creating one logs it at debug level with its origin."""

    def __init__(self, message, *args, **kwargs):
        super().__init__(message, *args, **kwargs)
        self.message = message
        # Frame that built the error, skipping this constructor and subclass constructors
        self.origin = next((frame for frame in reversed(traceback.extract_stack()[:-1])
                            if frame.name != "__init__"), None)
        where = f" at {self.origin.filename}:{self.origin.lineno} in {self.origin.name}" if self.origin else ""
        _logger.debug(f"{self}{where}")

    def __str__(self) -> str:
        return f"{type(self).__name__}('{self.message or 'Unknown Error!'}')"


class DomainError(OtomError, ValueError):
    """Raised when an input violates an operation's precondition."""
    pass


class ScheduleParseError(DomainError):
    """Raised when a schedule file row cannot be parsed."""

    def __init__(self, message, line_number: int = 0, *args, **kwargs):
        self.line_number = line_number
        if line_number:
            message = f"line {line_number}: {message}"
        super().__init__(message, *args, **kwargs)


class ConfigError(OtomError):
    """Raised for invalid configuration, unknown keys or missing artifacts."""
    pass


class NumericError(OtomError, ArithmeticError):
    """Raised when a numerical computation cannot produce a finite result."""
    pass


class SingularityError(NumericError):
    """Raised when a lineshape is evaluated at its singular point."""
    pass


class PrecisionError(NumericError):
    """Raised when a numerical integration step is too coarse."""
    pass


class DatasetFormatError(OtomError):
    """Raised when a dataset file is truncated or has a bad header."""
    pass


class WeightFormatError(OtomError):
    """Raised when a weight file is truncated or has a bad header."""
    pass
