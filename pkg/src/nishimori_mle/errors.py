"""Exception hierarchy shared by the library and the command-line tool."""


class NishimoriError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(NishimoriError, ValueError):
    """An argument lies outside the domain of the operation."""


class EstimationError(NishimoriError):
    """The weighted estimate cannot be formed (e.g. every model is dead)."""


class SizeError(NishimoriError):
    """An exact enumeration would exceed the combinatorial guard."""


class ConfigurationError(NishimoriError, ValueError):
    """A numerical configuration (grid, tolerance, ...) is unusable."""


class UsageError(NishimoriError):
    """A run configuration is malformed.

    ``line`` and ``key`` point at the offending input when known.
    """

    def __init__(self, message, *, key=None, line=None):
        super().__init__(message)
        self.key = key
        self.line = line

    def __str__(self):
        msg = super().__str__()
        where = []
        if self.key is not None:
            where.append(f"key {self.key!r}")
        if self.line is not None:
            where.append(f"line {self.line}")
        if where:
            return f"{msg} ({', '.join(where)})"
        return msg
