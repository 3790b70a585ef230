"""Exception hierarchy shared by all revmax modules."""


class RevMaxError(Exception):
    """Base class for every error raised by revmax."""


class ValidationError(RevMaxError, ValueError):
    """An input violates a documented invariant (range, shape, sum)."""


class DimensionError(ValidationError):
    """Topic vectors of a campaign and a graph have different lengths."""


class ParseError(ValidationError):
    """A text input could not be parsed.

    Attributes:
        line: 1-based line number of the offending line, or None.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnsupportedConfigurationError(RevMaxError):
    """The operation is not defined for this configuration."""


class EnumerationBudgetError(RevMaxError):
    """An exhaustive computation would exceed its enumeration budget."""


class UndefinedCurvatureError(RevMaxError, ValueError):
    """Every singleton value is zero, so the curvature ratio is 0/0."""
