"""Shared exception types.

Every error raised on a contract violation derives from :class:`PatchstyleError`
so callers (and the CLI) can distinguish domain failures from programming bugs.
"""


class PatchstyleError(Exception):
    """Base class for all library errors."""


class DimensionMismatchError(PatchstyleError):
    """Inputs that must share a shape or length do not."""


class EmptyInputError(PatchstyleError):
    """An operation received no usable data (empty sequence, all-false mask, ...)."""


class PairingError(PatchstyleError):
    """Keyframe index has no matching frame, or a mask cannot be paired."""


class SamplingError(PatchstyleError):
    """Patch sampling cannot proceed (no valid patch centers)."""


class ConfigError(PatchstyleError):
    """A configuration value is out of range or inconsistent."""


class ChannelMismatchError(PatchstyleError):
    """Model input channels disagree with the data offered to it."""


class CheckpointError(PatchstyleError):
    """A checkpoint archive is missing, truncated, or malformed."""


class ResourceError(PatchstyleError):
    """The device ran out of memory or another hard resource limit was hit."""
