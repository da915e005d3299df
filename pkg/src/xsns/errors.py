"""Shared exception types.

The CLI maps these onto exit codes: any :class:`XsnsError` is a validation
failure (exit 1), missing files exit 2, everything else is internal (exit 3).
"""


class XsnsError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(XsnsError, ValueError):
    """An input violated a documented invariant or precondition."""


class LayoutMismatchError(ValidationError):
    """Two artifacts do not share the same parameter layout (or p)."""
