"""Exception hierarchy shared by every module.

The CLI maps these onto process exit codes: argument/config errors to 2,
data errors to 3 and numeric errors to 4.
"""


class LinkShadowError(Exception):
    exit_code = 1


class ArgumentError(LinkShadowError, ValueError):
    """Invalid argument or precondition violated by the caller."""

    exit_code = 2


class DomainError(ArgumentError):
    """Argument outside the mathematical domain of a formula (e.g. d <= 0)."""


class ConfigError(ArgumentError):
    """Missing or inconsistent run configuration."""


class DataError(LinkShadowError):
    """Input data cannot support the requested estimate."""

    exit_code = 3


class ParseError(DataError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class RankError(DataError):
    """Regression design matrix is rank deficient."""


class UndefinedCorrelationError(DataError):
    """One of the vectors has zero variance."""


class NumericError(LinkShadowError, ArithmeticError):
    """Numerical procedure failed; ``estimate`` carries the last value seen."""

    exit_code = 4

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class ResourceError(LinkShadowError, MemoryError):
    exit_code = 4

    def __init__(self, message, required_bytes=None):
        super().__init__(message)
        self.required_bytes = required_bytes
