#!/usr/bin/env python3
"""
Errors - Exception hierarchy for the forensics toolkit
Every failure a user can trigger from a file, a flag or a model surfaces as one of these
"""


class ForensicsError(Exception):
    """Base class for all toolkit errors"""


class ImageFormatError(ForensicsError):
    """Image file cannot be decoded into an 8-bit 1- or 3-channel raster"""


class ShapeMismatchError(ForensicsError, ValueError):
    """Tensor shapes do not agree for a kernel or a checkpoint blob"""


class DepthMismatchError(ShapeMismatchError):
    """Feature depth does not match the depth a model was built for"""

    def __init__(self, expected: int, actual: int, context: str = "model"):
        self.expected = expected
        self.actual = actual
        super().__init__(
            f"Feature depth mismatch: {context} expects depth {expected}, got depth {actual}"
        )


class ManifestError(ForensicsError):
    """Manifest is empty, malformed or inconsistent with a request"""


class CheckpointFormatError(ForensicsError):
    """Checkpoint or feature container is corrupt"""

    def __init__(self, section: str, message: str):
        self.section = section
        super().__init__(f"Corrupt container in section '{section}': {message}")


class CheckpointVersionError(ForensicsError):
    """Checkpoint was written by an incompatible format version"""


class TrainingDivergedError(ForensicsError):
    """Loss became non-finite during training"""


class ConfigurationError(ForensicsError, ValueError):
    """Invalid combination of options"""
