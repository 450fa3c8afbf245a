"""Exception hierarchy shared by all modules."""

from __future__ import annotations

__all__ = [
    "ResiSpikeError",
    "NonSymmetric",
    "ConvergenceFailure",
    "ZeroTrace",
    "PoleTooClose",
    "NotUnit",
    "DegenerateSpectrum",
    "NotDetectable",
    "DegenerateBulk",
    "RootBracketFailure",
    "NoRoot",
    "ComplexBranch",
    "AllZero",
    "DimensionMismatch",
    "ParseError",
    "ConfigError",
]


class ResiSpikeError(Exception):
    """Base class for every error raised by this package."""


class NonSymmetric(ResiSpikeError, ValueError):
    pass


class ConvergenceFailure(ResiSpikeError, RuntimeError):
    pass


class ZeroTrace(ResiSpikeError, ValueError):
    pass


class PoleTooClose(ResiSpikeError, ValueError):
    """An evaluation point sits on (or within 1e-9 of) the top of a spectrum."""


class NotUnit(ResiSpikeError, ValueError):
    pass


class DegenerateSpectrum(ResiSpikeError, ValueError):
    """The top eigenvalue is not separated from the second one."""


class NotDetectable(ResiSpikeError, ValueError):
    """The spike does not separate from the bulk edge."""


class DegenerateBulk(ResiSpikeError, ValueError):
    """Both bulks are concentrated at 1, so the null law has no scale."""


class RootBracketFailure(ResiSpikeError, RuntimeError):
    pass


class NoRoot(ResiSpikeError, ValueError):
    pass


class ComplexBranch(ResiSpikeError, ValueError):
    pass


class AllZero(ResiSpikeError, ValueError):
    pass


class DimensionMismatch(ResiSpikeError, ValueError):
    pass


class ParseError(ResiSpikeError, ValueError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", column {column})" if column is not None else ")")
        super().__init__(message + loc)
        self.line = line
        self.column = column


class ConfigError(ResiSpikeError, ValueError):
    def __init__(self, message: str, field: str | None = None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field
