"""Shared exception types."""

__all__ = [
    "EmptyHistoryError",
    "InsufficientHistoryError",
    "OutOfRegionError",
    "DegeneratePosteriorError",
    "AlignmentError",
]


class EmptyHistoryError(ValueError):
    """A likelihood was requested with no observed locations to condition on."""


class InsufficientHistoryError(ValueError):
    """An operation needs more past observations than the track provides."""


class OutOfRegionError(ValueError):
    """A location falls outside the working grid."""


class DegeneratePosteriorError(ValueError):
    """All probability mass collapsed where the operation cannot proceed."""


class AlignmentError(ValueError):
    """Record sets that must match one-to-one do not."""
