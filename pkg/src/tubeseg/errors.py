"""
Exception hierarchy for tubeseg.

Every error carries the process exit code the command line maps it to.
"""

EXIT_OK = 0
EXIT_EMPTY_PREDICTION = 2
EXIT_USAGE = 64
EXIT_DATA_FORMAT = 65
EXIT_INTERNAL = 70


class TubesegError(Exception):
    """Base class for all tubeseg errors."""

    exit_code = EXIT_INTERNAL


class UsageError(TubesegError):
    """Bad command-line usage."""

    exit_code = EXIT_USAGE


class InvalidConfig(TubesegError, ValueError):
    """Configuration value or key is not acceptable."""

    exit_code = EXIT_USAGE


class InvalidWindow(InvalidConfig):
    """Window bounds with lo >= hi."""


class DegenerateSpec(InvalidConfig):
    """Phantom specification that cannot be rasterized."""


class ShapeMismatch(TubesegError, ValueError):
    """Arrays or tensors whose shapes do not line up."""

    exit_code = EXIT_DATA_FORMAT


class OddDimension(ShapeMismatch):
    """Spatial dimension not divisible by the pooling factor."""


class EmptyMask(TubesegError, ValueError):
    """Operation needs at least one foreground voxel."""

    exit_code = EXIT_DATA_FORMAT


class EmptyPrediction(TubesegError):
    """Coarse stage found no foreground above threshold."""

    exit_code = EXIT_EMPTY_PREDICTION


class IoFailure(TubesegError, OSError):
    """Writing an output file failed."""

    exit_code = EXIT_DATA_FORMAT


class FormatError(TubesegError):
    """Base class for binary format parse errors."""

    exit_code = EXIT_DATA_FORMAT


class MalformedHeader(FormatError):
    """NIfTI header has a bad size, magic or field value."""


class UnsupportedDatatype(FormatError):
    """NIfTI datatype code outside uint8/int16/float32."""


class TruncatedData(FormatError):
    """Payload shorter than the header declares."""


class BadMagic(FormatError):
    """Weight file does not start with the UNW1 magic."""


class ChecksumMismatch(FormatError):
    """Weight file CRC32 does not match its contents."""


class IncompleteWeights(FormatError):
    """Tensor set does not form a complete U-Net instance."""


class DegenerateAxis(UserWarning):
    """Resampling a single-voxel axis; values are replicated."""
