"""Exception types shared across the package.

The CLI maps each of these to a distinct exit status.
"""


class MultiDraftError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgument(MultiDraftError, ValueError):
    pass


class DegenerateInput(MultiDraftError, ValueError):
    """The draft distribution puts (numerically) all mass on one token."""


class ResourceLimit(MultiDraftError, RuntimeError):
    pass


class ConsistencyError(MultiDraftError, RuntimeError):
    """An internal invariant was violated; indicates a bug, not bad input."""


class TraceExhausted(MultiDraftError, LookupError):
    pass


class TraceParseError(MultiDraftError, ValueError):
    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.line = line
        self.field = field
