"""Exception types shared across the package.

Negative answers (a set really is small, a verdict really is "no") are not
errors; they come back as ordinary result values carrying their own
certificates.  Exceptions are reserved for inputs that break a contract or
for internal re-verification failures.
"""
from __future__ import annotations


class CalcError(Exception):
    """Base class for all package errors."""


class TreeError(CalcError):
    """A tree, cylinder set, or level function violates a structural invariant."""


class PreconditionError(CalcError):
    """An operation was called with inputs that fail its stated preconditions."""


class VerificationError(CalcError):
    """A certificate failed independent re-verification."""


class InsufficientDepthError(CalcError):
    """The instance is too shallow for the requested construction."""


class GenerationError(CalcError):
    """A randomized search exhausted its retry budget."""

    def __init__(self, message: str, stats: dict | None = None):
        super().__init__(message)
        self.stats = stats or {}


class InternalError(CalcError):
    """A result failed its own post-hoc check; indicates a bug, not bad input."""
