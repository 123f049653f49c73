"""Exception types shared across the toolkit.

The CLI maps these onto process exit codes: configuration and validation
problems exit 2, checkpoint/dimension compatibility problems exit 3, and
evaluation-protocol violations exit 4.
"""


class Speech2ImageError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(Speech2ImageError):
    """Invalid or unknown configuration keys/values."""


class ManifestError(Speech2ImageError):
    """Malformed manifest line or failed manifest validation."""


class AudioError(Speech2ImageError):
    """Unusable audio input (too short, non-finite, unreadable)."""


class CompatibilityError(Speech2ImageError):
    """Checkpoints or tensors whose dimensions do not fit together."""


class ProtocolError(Speech2ImageError):
    """Evaluation protocol violated (e.g. a class without fake images)."""


class TrainingDivergedError(Speech2ImageError):
    """Training loss became non-finite; aborted with diagnostics."""
