"""Exception types shared across the pipeline."""

from __future__ import annotations


class VideographError(Exception):
    """Base class for all pipeline errors."""


class UnknownKeyframeError(VideographError):
    """A triplet references a keyframe that is not in the video's keyframe list."""


class FeatureDimensionMismatchError(VideographError):
    """A feature source returned a vector of the wrong dimension."""


class MissingFeatureError(VideographError):
    """A file-backed feature source has no entry for the requested key."""


class ShapeMismatchError(VideographError):
    """Tensor operands have incompatible shapes."""


class DuplicateIdError(VideographError):
    """Two index entries share the same video id."""


class DimensionMismatchError(VideographError):
    """Vectors in an index (or a query) disagree on dimensionality."""


class ZeroVectorError(VideographError):
    """A zero vector was offered where a direction is required."""


class EmptyInputError(VideographError):
    """An operation that needs at least one element received none."""


class ValidationFailedError(VideographError):
    """A constructed graph violates its structural invariants."""

    def __init__(self, message: str, violations: list[str] | None = None):
        super().__init__(message)
        self.violations = violations or []


class CorruptFileError(VideographError):
    """A binary artifact could not be decoded.

    Carries the offending path and byte offset so drivers can report the
    exact failure location.
    """

    def __init__(self, path: str, offset: int, reason: str):
        super().__init__(f"{path}: corrupt at byte {offset}: {reason}")
        self.path = str(path)
        self.offset = offset
        self.reason = reason
