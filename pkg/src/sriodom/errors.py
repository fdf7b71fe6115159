"""Typed errors raised across the pipeline."""


class SriodomError(Exception):
    """Base class for all package errors."""


class DegeneratePoint(SriodomError):
    """A point with zero range cannot be converted to spherical coordinates."""


class RotationNearPi(SriodomError):
    """SE(3) log is ill-conditioned for rotation angles at or near pi."""


class EmptyImage(SriodomError):
    """Operation requires at least one valid pixel."""


class ImageTooSmall(SriodomError):
    """3x3 convolution requires an image of at least 3x3 pixels."""


class OddWidth(SriodomError):
    """Frequency-domain ground filtering requires an even image width."""


class InsufficientConstraints(SriodomError):
    """Too few valid correspondences to constrain the 6-DoF pose."""


class MalformedFrame(SriodomError):
    """Velodyne binary frame whose size is not a whole number of records."""


class MalformedPoseLine(SriodomError):
    """Pose file line with the wrong number of fields."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class FileAccessError(SriodomError):
    """File could not be read or written."""


class ConfigError(SriodomError):
    """Configuration file key is unknown or has the wrong type."""


class TrajectoryTooShort(SriodomError):
    """Trajectory covers too little arc length for segment-wise evaluation."""
