"""Exception types shared across the package.

Every error raised on a user-facing path carries the offending field or
key in its message, so CLI output stays actionable without a traceback.
"""

from __future__ import annotations


class CascadeError(Exception):
    """Base class for all package-specific errors."""


class InvalidParams(CascadeError):
    """Model or integration parameters violate a documented invariant."""


class ValidationError(CascadeError):
    """A config value parsed but failed semantic validation.

    The first argument is the offending field name; an optional second
    argument elaborates.
    """

    def __init__(self, field: str, detail: str = ""):
        self.field = field
        msg = field if not detail else f"{field}: {detail}"
        super().__init__(msg)


class ParseError(CascadeError):
    """Config text could not be parsed, or contains unknown sections/keys."""


class IndexOutOfRange(CascadeError, IndexError):
    """A shell or node index lies outside the configured range."""


class NoEvents(CascadeError):
    """A wavefront report was requested for a trajectory without events."""


class NonFiniteState(CascadeError):
    """A state vector contains NaN or infinity.

    Integration never raises this: a step that produces non-finite values
    terminates the run with the underflow status and a diagnostic flag.
    It is raised by entry points that are handed an already broken state.
    """
