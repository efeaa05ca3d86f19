"""Exception types raised across the package.

Every error that a caller is expected to branch on gets its own class so
tests and the CLI can map failures to exit codes without string matching.
"""


class SpeedNavError(Exception):
    """Base class for all package errors."""


class EmptyStreamError(SpeedNavError):
    """A sensor stream has no samples."""


class NonMonotonicTimeError(SpeedNavError):
    """Timestamps are not strictly increasing."""


class GapTooLargeError(SpeedNavError):
    """A sensor stream has a dropout longer than the tolerated gap."""


class NonFiniteError(SpeedNavError):
    """A value that must be finite is NaN or infinite."""


class InfeasibleProfileError(SpeedNavError):
    """A drive profile demands a speed change faster than the ramp limit allows."""


class TooFewFixesError(SpeedNavError):
    """Not enough position fixes to differentiate."""


class NonUniformRateError(SpeedNavError):
    """Sample spacing deviates too far from the nominal rate."""


class EmptySeriesError(SpeedNavError):
    """A series that must have samples is empty."""


class LengthMismatchError(SpeedNavError):
    """Two per-tick sequences that must align have different lengths or grids."""


class NoLanesError(SpeedNavError):
    """Batch assembly was given no window lanes."""


class TooFewDrivesError(SpeedNavError):
    """The train/validation split needs at least two drives."""


class InvalidConfigError(SpeedNavError):
    """A configuration document or model configuration failed validation."""


class ShapeMismatchError(SpeedNavError):
    """Array arguments disagree on shape."""


class EmptyDatasetError(SpeedNavError):
    """Training was started with no windows."""


class StreamTooShortError(SpeedNavError):
    """An input stream is shorter than one model window."""


class NegativeSpeedError(SpeedNavError):
    """A speed that must be non-negative is negative."""


class NonPositiveDtError(SpeedNavError):
    """A time step that must be positive is zero or negative."""


class MissingTruthError(SpeedNavError):
    """An operation requires ground truth that the drive does not carry."""


class SpanMismatchError(SpeedNavError):
    """A reference series does not cover the span of the series under test."""


class DivergenceError(SpeedNavError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, message: str | None = None):
        self.epoch = epoch
        super().__init__(message or f"non-finite loss at epoch {epoch}")


class IoFailureError(SpeedNavError):
    """A file could not be read or written, or is not in the expected format."""


class ChecksumMismatchError(SpeedNavError):
    """A serialized artifact failed its integrity check."""


class ConfigMismatchError(SpeedNavError):
    """A serialized artifact does not match the expected configuration."""
