"""Exception hierarchy shared by all epiwarn modules."""


class EpiwarnError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(EpiwarnError, ValueError):
    """An argument is outside the mathematical domain of an operation."""


class ParseError(EpiwarnError, ValueError):
    """A data or config file violates its schema.

    Messages name the offending file, row and field where applicable.
    """

    def __init__(self, message, path=None, row=None, field=None):
        parts = []
        if path is not None:
            parts.append(str(path))
        if row is not None:
            parts.append(f"row {row}")
        if field is not None:
            parts.append(f"field {field!r}")
        prefix = ", ".join(parts)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.path = path
        self.row = row
        self.field = field


class ConfigError(EpiwarnError, ValueError):
    """A run configuration is invalid or incomplete."""


class NumericalError(EpiwarnError, ArithmeticError):
    """A linear-algebra step failed beyond recoverable jitter."""


class UndefinedStatisticError(EpiwarnError, ValueError):
    """A statistic (correlation, AUC) is undefined for the given inputs."""


class TweetsUnavailableError(EpiwarnError, LookupError):
    """The operation needs a tweet series the city does not have."""
