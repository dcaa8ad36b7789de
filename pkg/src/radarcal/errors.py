"""Exception types raised across the calibration pipeline.

Everything derives from :class:`CalibrationError` so callers can catch one
base class at pipeline boundaries.  The CLI maps each subclass to a distinct
exit code.
"""

from __future__ import annotations


class CalibrationError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(CalibrationError, ValueError):
    """An argument is malformed (non-finite, wrong shape, out of range)."""


class EmptyInputError(InvalidArgumentError):
    """An input collection that must be non-empty is empty."""


class InsufficientDataError(CalibrationError):
    """Too few measurements to determine the requested quantity."""


class DegenerateGeometryError(CalibrationError):
    """Measurement geometry does not constrain the solution.

    Raised e.g. when all detections in a scan share (nearly) one azimuth, so
    the normal matrix of the ego-velocity fit is numerically singular.
    """


class NoConsensusError(CalibrationError):
    """RANSAC failed to find a consensus set of the required size."""


class InsufficientExcitationError(CalibrationError):
    """The motion contains no usable signal for the requested parameter.

    Typical cause: zero angular rate throughout a dataset, which makes the
    lever arm between the two radars invisible.
    """


class UnidentifiableError(CalibrationError):
    """The dataset fails the excitation check; calibration is refused.

    Carries the diagnostic report on ``self.report`` when available.
    """

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class InvalidWeightError(InvalidArgumentError):
    """A supplied measurement covariance is not positive definite."""


class ParseError(CalibrationError, ValueError):
    """A data or config file does not conform to its documented format."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
