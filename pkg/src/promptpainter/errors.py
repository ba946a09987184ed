"""Exception hierarchy shared by all modules.

The CLI maps each family to a distinct exit code.
"""


class PromptPainterError(Exception):
    """Base class for every error raised by this package."""


class DomainError(PromptPainterError, ValueError):
    """An input violates a mathematical or shape precondition."""


class ConfigError(PromptPainterError, ValueError):
    """Invalid configuration: malformed file, bad key, failed constraint."""

    def __init__(self, message, field=None):
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)
        self.field = field


class BackendError(PromptPainterError, RuntimeError):
    """An encoder, generator or upscaler backend failed or is unavailable."""


class NumericalAbort(PromptPainterError, ArithmeticError):
    """The loss became non-finite; carries the offending record and the partial trace."""

    def __init__(self, message, record=None, trace=None):
        super().__init__(message)
        self.record = record
        self.trace = trace
