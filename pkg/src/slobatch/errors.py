"""Exception types shared across the slobatch package."""

from __future__ import annotations


class SlobatchError(Exception):
    """Base class for all slobatch errors."""


class InsufficientDataError(SlobatchError):
    """Too few distinct sample points to fit a model."""


class InvalidSampleError(SlobatchError):
    """A profiling sample violates its preconditions (e.g. non-positive latency)."""


class EstimationFailureError(SlobatchError):
    """No parameter value in the configured scan range explains the observation."""


class ProfileValidationError(SlobatchError):
    """A model profile violates its invariants (raised at load/validation time)."""


class UnknownBatchError(SlobatchError):
    """Requested CPU batch size has no fitted coefficients in the profile."""


class OutOfRangeError(SlobatchError):
    """A resource or batch value lies outside the profile's configured ranges."""


class MisorderedTimeoutsError(SlobatchError):
    """equivalent_timeout_pair called with t1 > t2; the caller must order arguments."""


class IncompleteGroupError(SlobatchError):
    """A group operation needs per-member timeouts that have not been set."""


class InputError(SlobatchError):
    """A user-supplied file or flag could not be parsed or fails basic checks."""
