"""
Core - Data models, taxonomies and numeric kernels

Contains the domain models, image decoding, co-occurrence features, the
neural network kernels and the Xception-style classifier.
"""

from core.models import (
    ArchConfig,
    CoocTensor,
    ManifestRecord,
    ModelCheckpoint,
    PairDirection,
    PairSubset,
    PatchSpec,
    PixelImage,
    PreprocPolicy,
    Split,
)
from core.errors import (
    CheckpointFormatError,
    CheckpointVersionError,
    DepthMismatchError,
    ForensicsError,
    ImageFormatError,
    ManifestError,
    ShapeMismatchError,
    TrainingDivergedError,
)

__all__ = [
    "ArchConfig",
    "CoocTensor",
    "ManifestRecord",
    "ModelCheckpoint",
    "PairDirection",
    "PairSubset",
    "PatchSpec",
    "PixelImage",
    "PreprocPolicy",
    "Split",
    "CheckpointFormatError",
    "CheckpointVersionError",
    "DepthMismatchError",
    "ForensicsError",
    "ImageFormatError",
    "ManifestError",
    "ShapeMismatchError",
    "TrainingDivergedError",
]
