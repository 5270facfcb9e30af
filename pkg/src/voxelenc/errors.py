"""Exception hierarchy shared across the toolkit.

Two broad classes matter for the CLI exit-code contract: validation
problems (bad shapes, bad config, violated preconditions) exit with 1,
I/O and file-format problems exit with 2.
"""


class VoxelencError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class ValidationError(VoxelencError):
    """Violated precondition, bad shape, or invalid configuration."""

    exit_code = 1


class MatrixFormatError(VoxelencError):
    """Unreadable or corrupt matrix file (bad magic, truncation, ragged CSV)."""

    exit_code = 2


class ManifestError(ValidationError):
    """Dataset manifest fails validation (overlapping ROIs, shape mismatch)."""


class IoError(VoxelencError):
    """Filesystem-level failure wrapping the underlying OSError."""

    exit_code = 2
