"""Exception types shared across the package."""

from __future__ import annotations


class EngineError(Exception):
    """Base class for errors raised by this package."""


class ContextLimitError(EngineError):
    """A token prefix grew past the backend's context window."""


class BackendError(EngineError):
    """A model backend failed to produce a next-token distribution."""


class DataError(EngineError):
    """Training or evaluation data is unusable as given."""


class FitQualityError(DataError):
    """A fitted model violates a sanity requirement (e.g. slope sign)."""


class InconsistencyError(EngineError):
    """Inputs that must describe the same run disagree with each other."""
