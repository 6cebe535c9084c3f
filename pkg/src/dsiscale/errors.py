"""Exception types raised across the package."""


class DSIError(Exception):
    """Base class for all package errors."""


class OutOfRange(DSIError, ValueError):
    pass


class NotPSD(DSIError, ValueError):
    pass


class NonPositiveTime(DSIError, ValueError):
    pass


class InsufficientPaths(DSIError, ValueError):
    pass


class TooFewPoints(DSIError, ValueError):
    pass


class ZeroVariation(DSIError, ValueError):
    """A quadratic variation is zero, so its log ratio is undefined."""

    def __init__(self, j: int, i: int):
        super().__init__(f"quadratic variation SS[{j},{i}] is zero")
        self.j = j
        self.i = i


class IndexOutOfData(DSIError, IndexError):
    pass


class NonContiguousGroup(DSIError, ValueError):
    pass


class RangeTooNarrow(DSIError, ValueError):
    pass


class ParseError(DSIError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EmptySelection(DSIError, ValueError):
    pass


class NonMonotoneDates(DSIError, ValueError):
    pass


class ConfigError(DSIError, ValueError):
    """Configuration failed validation; ``problems`` lists every violation."""

    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = list(problems)
