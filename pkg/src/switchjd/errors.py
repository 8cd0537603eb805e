"""Exception hierarchy shared by all modules."""


class SwitchJDError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(SwitchJDError):
    """Malformed configuration: bad key, bad value, unknown family.

    ``field`` names the offending configuration path when known; ``line`` and
    ``column`` are set for parse errors.
    """

    def __init__(self, message: str, field: str | None = None, line: int | None = None,
                 column: int | None = None):
        self.field = field
        self.line = line
        self.column = column
        where = []
        if field:
            where.append(field)
        if line is not None:
            where.append(f"line {line}" + (f", column {column}" if column is not None else ""))
        super().__init__(f"{message} ({'; '.join(where)})" if where else message)


class StructuralError(SwitchJDError):
    """Inconsistent model structure (dimension mismatch, non-symmetric matrix)."""


class UsageError(SwitchJDError):
    """An operation was called with arguments outside its contract."""


class DivergenceError(SwitchJDError):
    """Fixed-point iteration stopped contracting."""

    def __init__(self, message: str, trace):
        super().__init__(message)
        self.trace = trace
