#!/usr/bin/env python3
"""
Data Models - Type-safe data structures for GAN forensics
Images, co-occurrence tensors, manifests, preprocessing policies, architecture
configs, evaluation reports, heatmaps, embeddings and checkpoints
"""

import hashlib
import json
import zlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.categories import DETECTION_CLASSES, jpeg_tag, validate_qualities


# ============================================================================
# ENUMS
# ============================================================================

class PairDirection(str, Enum):
    """Offset of the second pixel of a pair relative to the first"""
    HORIZONTAL = "horizontal"
    VERTICAL = "vertical"
    DIAGONAL = "diagonal"
    ANTIDIAGONAL = "antidiagonal"

    @property
    def offset(self) -> Tuple[int, int]:
        """(row, col) offset of the partner pixel"""
        return _DIRECTION_OFFSETS[self]

    @property
    def letter(self) -> str:
        return _DIRECTION_LETTERS[self]


_DIRECTION_OFFSETS = {
    PairDirection.HORIZONTAL: (0, 1),
    PairDirection.VERTICAL: (1, 0),
    PairDirection.DIAGONAL: (1, 1),
    PairDirection.ANTIDIAGONAL: (1, -1),
}

_DIRECTION_LETTERS = {
    PairDirection.HORIZONTAL: "h",
    PairDirection.VERTICAL: "v",
    PairDirection.DIAGONAL: "d",
    PairDirection.ANTIDIAGONAL: "a",
}

# Canonical stacking order
DIRECTION_ORDER = [
    PairDirection.HORIZONTAL,
    PairDirection.VERTICAL,
    PairDirection.DIAGONAL,
    PairDirection.ANTIDIAGONAL,
]


class Split(str, Enum):
    """Dataset split assignment"""
    TRAIN = "train"
    VAL = "val"
    TEST = "test"
    UNASSIGNED = "unassigned"


class HeadKind(str, Enum):
    """Classifier head"""
    DETECTION = "detection"
    ATTRIBUTION = "attribution"


# ============================================================================
# IMAGE MODELS
# ============================================================================

@dataclass
class PixelImage:
    """Decoded 8-bit raster with row-major interleaved samples"""
    width: int
    height: int
    channels: int
    data: np.ndarray

    def __post_init__(self):
        if self.channels not in (1, 3):
            raise ValueError(f"Only 1- or 3-channel images are supported, got {self.channels}")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"Image must be nonempty, got {self.width}x{self.height}")
        data = np.asarray(self.data)
        if data.dtype != np.uint8:
            if not np.issubdtype(data.dtype, np.number):
                raise ValueError(f"Samples must be numeric, got dtype {data.dtype}")
            if data.size and not np.all(np.mod(data, 1) == 0):
                raise ValueError("Samples must be whole numbers; refusing to truncate")
            if data.size and (data.min() < 0 or data.max() > 255):
                raise ValueError("Samples must lie in [0, 255]")
            data = data.astype(np.uint8)
        data = np.ascontiguousarray(data).reshape(-1)
        expected = self.width * self.height * self.channels
        if data.size != expected:
            raise ValueError(f"Data length {data.size} != width*height*channels = {expected}")
        self.data = data

    @classmethod
    def from_array(cls, array: np.ndarray) -> "PixelImage":
        """Create from an (H, W) or (H, W, C) uint8 array"""
        array = np.asarray(array)
        if array.ndim == 2:
            array = array[:, :, None]
        if array.ndim != 3:
            raise ValueError(f"Expected a 2-D or 3-D array, got shape {array.shape}")
        height, width, channels = array.shape
        return cls(width=width, height=height, channels=channels, data=array.reshape(-1))

    def as_array(self) -> np.ndarray:
        """(H, W, C) view of the samples"""
        return self.data.reshape(self.height, self.width, self.channels)

    def channel(self, index: int) -> np.ndarray:
        """(H, W) view of one channel"""
        return self.as_array()[:, :, index]

    def crop(self, row: int, col: int, height: int, width: int) -> "PixelImage":
        """Copy of an axis-aligned window"""
        return PixelImage.from_array(self.as_array()[row:row + height, col:col + width].copy())

    def __eq__(self, other) -> bool:
        if not isinstance(other, PixelImage):
            return NotImplemented
        return (self.width == other.width and self.height == other.height
                and self.channels == other.channels
                and np.array_equal(self.data, other.data))


@dataclass(frozen=True)
class PatchSpec:
    """Sliding-window patch size and stride in pixels"""
    size: int
    stride: int

    def __post_init__(self):
        if self.size < 2:
            raise ValueError(f"Patch size must be >= 2, got {self.size}")
        if self.stride < 1:
            raise ValueError(f"Patch stride must be >= 1, got {self.stride}")

    def to_dict(self) -> Dict[str, Any]:
        return {"size": self.size, "stride": self.stride}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PatchSpec":
        return cls(size=int(data["size"]), stride=int(data["stride"]))


# ============================================================================
# CO-OCCURRENCE MODELS
# ============================================================================

@dataclass(frozen=True)
class PairSubset:
    """Ordered, duplicate-free set of pair directions (canonical H, V, D, A order)"""
    directions: Tuple[PairDirection, ...]

    def __post_init__(self):
        dirs = [PairDirection(d) for d in self.directions]
        if not dirs:
            raise ValueError("Pair subset must be nonempty")
        if len(set(dirs)) != len(dirs):
            raise ValueError(f"Pair subset has duplicate directions: {[d.value for d in dirs]}")
        ordered = tuple(d for d in DIRECTION_ORDER if d in dirs)
        object.__setattr__(self, "directions", ordered)

    @classmethod
    def from_tag(cls, tag: str) -> "PairSubset":
        """Parse a tag such as 'h', 'hv' or 'hvda'"""
        by_letter = {d.letter: d for d in DIRECTION_ORDER}
        letters = tag.strip().lower()
        try:
            return cls(tuple(by_letter[c] for c in letters))
        except KeyError:
            raise ValueError(f"Unknown pair subset tag: {tag!r}") from None

    @property
    def tag(self) -> str:
        return "".join(d.letter for d in self.directions)

    def __len__(self) -> int:
        return len(self.directions)


HVDA = PairSubset.from_tag("hvda")


@dataclass
class CoocTensor:
    """Stacked max-normalized co-occurrence histograms, shape 256x256xD"""
    values: np.ndarray
    source_dims: Tuple[int, int]
    subset: PairSubset
    channels: int

    @property
    def depth(self) -> int:
        return self.values.shape[2]

    def slice_index(self, channel: int, direction: PairDirection) -> int:
        """Depth index of (channel, direction): channel-major, direction-minor"""
        return channel * len(self.subset) + self.subset.directions.index(direction)


# ============================================================================
# DATASET MODELS
# ============================================================================

@dataclass
class ManifestRecord:
    """One labelled image of a corpus manifest"""
    path: str
    label: str
    group_id: str
    split: str = Split.UNASSIGNED.value

    def __post_init__(self):
        if not self.group_id:
            raise ValueError(f"Record {self.path} has an empty group_id")
        valid_splits = {s.value for s in Split}
        if self.split not in valid_splits:
            raise ValueError(f"Invalid split: {self.split}. Must be one of {valid_splits}")

    def to_dict(self) -> Dict[str, Any]:
        return {"path": self.path, "label": self.label,
                "group_id": self.group_id, "split": self.split}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ManifestRecord":
        return cls(
            path=data["path"],
            label=data["label"],
            group_id=data.get("group_id") or data["path"],
            split=data.get("split", Split.UNASSIGNED.value),
        )


def record_seed(seed: int, path: str, purpose: str = "") -> int:
    """Deterministic per-record seed derived from (seed, path, purpose)"""
    return zlib.crc32(f"{seed}:{path}:{purpose}".encode("utf-8"))


@dataclass
class PreprocPolicy:
    """JPEG, patch and pair-subset preprocessing applied at feature time"""
    jpeg_qualities: List[Optional[int]] = field(default_factory=lambda: [None])
    patch: Optional[PatchSpec] = None
    subset: PairSubset = HVDA
    rng_seed: int = 0

    def __post_init__(self):
        ok, error = validate_qualities(self.jpeg_qualities)
        if not ok:
            raise ValueError(error)

    def quality_for(self, path: str) -> Optional[int]:
        """Quality for one record: constant for a single-entry list, else an equal-probability draw"""
        if len(self.jpeg_qualities) == 1:
            return self.jpeg_qualities[0]
        rng = np.random.default_rng(record_seed(self.rng_seed, path, "jpeg"))
        return self.jpeg_qualities[int(rng.integers(len(self.jpeg_qualities)))]

    def with_changes(self, **changes) -> "PreprocPolicy":
        data = {"jpeg_qualities": list(self.jpeg_qualities), "patch": self.patch,
                "subset": self.subset, "rng_seed": self.rng_seed}
        data.update(changes)
        return PreprocPolicy(**data)

    def describe(self) -> str:
        patch = "whole" if self.patch is None else f"{self.patch.size}/{self.patch.stride}"
        jpeg = ",".join(jpeg_tag(q) for q in self.jpeg_qualities)
        return f"pairs={self.subset.tag} patch={patch} jpeg={jpeg} seed={self.rng_seed}"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "jpeg_qualities": list(self.jpeg_qualities),
            "patch": self.patch.to_dict() if self.patch else None,
            "subset": self.subset.tag,
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PreprocPolicy":
        patch = data.get("patch")
        return cls(
            jpeg_qualities=list(data.get("jpeg_qualities", [None])),
            patch=PatchSpec.from_dict(patch) if patch else None,
            subset=PairSubset.from_tag(data.get("subset", "hvda")),
            rng_seed=int(data.get("rng_seed", 0)),
        )

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:12]


@dataclass
class SynthSpec:
    """Parameters of the synthetic texture corpus"""
    class_names: List[str]
    autocorrelation_lengths: List[float]
    quantization_steps: List[int]
    noise_amplitudes: List[float]
    image_size: int = 256
    images_per_class: int = 2000
    rng_seed: int = 0

    def __post_init__(self):
        count = len(self.class_names)
        if not 2 <= count <= 6:
            raise ValueError(f"Synthetic corpora support 2-6 classes, got {count}")
        for name in ("autocorrelation_lengths", "quantization_steps", "noise_amplitudes"):
            if len(getattr(self, name)) != count:
                raise ValueError(f"{name} must have one entry per class")
        if len(set(self.quantization_steps)) != count:
            raise ValueError("Quantization steps must be distinct per class")
        if any(step < 1 for step in self.quantization_steps):
            raise ValueError("Quantization steps must be >= 1")
        if self.image_size < 2 or self.images_per_class < 1:
            raise ValueError("image_size must be >= 2 and images_per_class >= 1")

    @property
    def class_count(self) -> int:
        return len(self.class_names)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "class_names": list(self.class_names),
            "autocorrelation_lengths": list(self.autocorrelation_lengths),
            "quantization_steps": list(self.quantization_steps),
            "noise_amplitudes": list(self.noise_amplitudes),
            "image_size": self.image_size,
            "images_per_class": self.images_per_class,
            "rng_seed": self.rng_seed,
        }


# ============================================================================
# ARCHITECTURE MODEL
# ============================================================================

ARCH_PRESETS = {
    "full": {
        "entry_conv_widths": [32, 64],
        "entry_widths": [128, 256, 728],
        "middle_blocks": 8,
        "middle_width": 728,
        "exit_widths": [1024, 1536, 2048],
    },
    "mini": {
        "entry_conv_widths": [16, 32],
        "entry_widths": [64, 128, 256],
        "middle_blocks": 4,
        "middle_width": 256,
        "exit_widths": [384, 512],
    },
    "micro": {
        "entry_conv_widths": [4, 8],
        "entry_widths": [8, 16],
        "middle_blocks": 1,
        "middle_width": 16,
        "exit_widths": [16, 24],
    },
}

INPUT_SIZE = 256


@dataclass
class ArchConfig:
    """Mini-Xception architecture over 256x256xD co-occurrence input"""
    input_depth: int
    entry_conv_widths: List[int]
    entry_widths: List[int]
    middle_blocks: int
    middle_width: int
    exit_widths: List[int]
    head: str = HeadKind.DETECTION.value
    num_classes: int = 2
    scale: str = "mini"

    def __post_init__(self):
        if self.input_depth < 1:
            raise ValueError(f"input_depth must be >= 1, got {self.input_depth}")
        if len(self.entry_conv_widths) != 2:
            raise ValueError("entry_conv_widths must list two widths")
        if not self.entry_widths or not self.exit_widths:
            raise ValueError("entry_widths and exit_widths must be nonempty")
        if self.middle_blocks < 0:
            raise ValueError("middle_blocks must be >= 0")
        if self.middle_width != self.entry_widths[-1]:
            raise ValueError(
                f"Inconsistent widths: middle_width {self.middle_width} must equal "
                f"the last entry width {self.entry_widths[-1]}"
            )
        if any(w < 1 for w in self.entry_conv_widths + self.entry_widths + self.exit_widths):
            raise ValueError("All widths must be positive")
        if self.head not in {h.value for h in HeadKind}:
            raise ValueError(f"Invalid head: {self.head}")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.head == HeadKind.DETECTION.value and self.num_classes != 2:
            raise ValueError("Detection heads classify exactly two classes")

    @classmethod
    def preset(cls, scale: str = "mini", input_depth: int = 12,
               head: str = HeadKind.DETECTION.value, num_classes: int = 2) -> "ArchConfig":
        """Build a preset configuration (full, mini or micro)"""
        if scale not in ARCH_PRESETS:
            raise ValueError(f"Unknown scale: {scale}. Must be one of {sorted(ARCH_PRESETS)}")
        widths = ARCH_PRESETS[scale]
        return cls(
            input_depth=input_depth,
            entry_conv_widths=list(widths["entry_conv_widths"]),
            entry_widths=list(widths["entry_widths"]),
            middle_blocks=widths["middle_blocks"],
            middle_width=widths["middle_width"],
            exit_widths=list(widths["exit_widths"]),
            head=head,
            num_classes=num_classes,
            scale=scale,
        )

    @property
    def output_dim(self) -> int:
        """1 logit for detection, C logits for attribution"""
        return 1 if self.head == HeadKind.DETECTION.value else self.num_classes

    @property
    def feature_width(self) -> int:
        """Width of the pooled penultimate vector"""
        return self.exit_widths[-1]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "input_depth": self.input_depth,
            "entry_conv_widths": list(self.entry_conv_widths),
            "entry_widths": list(self.entry_widths),
            "middle_blocks": self.middle_blocks,
            "middle_width": self.middle_width,
            "exit_widths": list(self.exit_widths),
            "head": self.head,
            "num_classes": self.num_classes,
            "scale": self.scale,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ArchConfig":
        return cls(**data)


# ============================================================================
# EVALUATION MODELS
# ============================================================================

@dataclass
class ConfusionMatrix:
    """Rows = ground truth, columns = predicted"""
    classes: List[str]
    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        n = len(self.classes)
        if self.counts.shape != (n, n):
            raise ValueError(f"Confusion counts must be {n}x{n}, got {self.counts.shape}")
        if (self.counts < 0).any():
            raise ValueError("Confusion counts must be >= 0")

    @classmethod
    def from_predictions(cls, classes: Sequence[str], truth: Sequence[int],
                         predicted: Sequence[int]) -> "ConfusionMatrix":
        n = len(classes)
        counts = np.zeros((n, n), dtype=np.int64)
        np.add.at(counts, (np.asarray(truth, dtype=np.int64),
                           np.asarray(predicted, dtype=np.int64)), 1)
        return cls(list(classes), counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def recalls(self) -> np.ndarray:
        """Row-normalized diagonal (0 for classes with no test records)"""
        rows = self.counts.sum(axis=1).astype(np.float64)
        diag = np.diag(self.counts).astype(np.float64)
        return np.divide(diag, rows, out=np.zeros_like(diag), where=rows > 0)

    def to_dict(self) -> Dict[str, Any]:
        return {"classes": list(self.classes), "counts": self.counts.tolist()}


@dataclass
class EvalReport:
    """Accuracy, equal-prior accuracy, recalls and confusion of one evaluation"""
    accuracy: float
    equal_prior_accuracy: float
    recalls: List[float]
    confusion: ConfusionMatrix
    fingerprint: str = ""
    mean_loss: float = 0.0
    evaluated: int = 0
    mean_gan_score: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "accuracy": self.accuracy,
            "equal_prior_accuracy": self.equal_prior_accuracy,
            "recalls": dict(zip(self.confusion.classes, self.recalls)),
            "confusion": self.confusion.to_dict(),
            "fingerprint": self.fingerprint,
            "mean_loss": self.mean_loss,
            "evaluated": self.evaluated,
            "mean_gan_score": self.mean_gan_score,
        }


# ============================================================================
# LOCALIZATION / EMBEDDING MODELS
# ============================================================================

@dataclass
class Heatmap:
    """Per-pixel mean patch score aligned to a source image"""
    scores: np.ndarray
    coverage: np.ndarray
    patch: PatchSpec

    @property
    def height(self) -> int:
        return self.scores.shape[0]

    @property
    def width(self) -> int:
        return self.scores.shape[1]


@dataclass
class EmbeddingSet:
    """Feature vectors with their class labels and source ids"""
    vectors: np.ndarray
    labels: List[str]
    source_ids: List[str]
    explained_variance: Optional[np.ndarray] = None
    components: Optional[np.ndarray] = None

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2:
            raise ValueError(f"Embedding vectors must be 2-D, got shape {self.vectors.shape}")
        if len(self.labels) != self.vectors.shape[0] or len(self.source_ids) != len(self.labels):
            raise ValueError("labels and source_ids must have one entry per vector")
        if not np.isfinite(self.vectors).all():
            raise ValueError("Embedding vectors must be finite")

    def __len__(self) -> int:
        return self.vectors.shape[0]


@dataclass
class TsneConfig:
    """Exact t-SNE hyperparameters"""
    perplexity: float = 30.0
    iterations: int = 1000
    learning_rate: float = 200.0
    early_exaggeration: float = 12.0
    exaggeration_iterations: int = 250
    initial_momentum: float = 0.5
    final_momentum: float = 0.8
    seed: int = 0

    def check_feasible(self, n_points: int) -> None:
        """Raise ValueError when perplexity >= (N - 1) / 3"""
        if self.perplexity <= 0:
            raise ValueError(f"Perplexity must be positive, got {self.perplexity}")
        if self.perplexity >= (n_points - 1) / 3.0:
            raise ValueError(
                f"Perplexity {self.perplexity} is infeasible for {n_points} points "
                f"(must be < {(n_points - 1) / 3.0:.3f})"
            )


# ============================================================================
# CHECKPOINT MODEL
# ============================================================================

CHECKPOINT_FORMAT_VERSION = 1


@dataclass
class ModelCheckpoint:
    """Architecture, ordered classes, preprocessing and all parameter tensors"""
    arch: ArchConfig
    classes: List[str]
    policy: PreprocPolicy
    params: Dict[str, np.ndarray]
    metadata: Dict[str, Any] = field(default_factory=dict)
    format_version: int = CHECKPOINT_FORMAT_VERSION

    def __post_init__(self):
        if self.arch.head == HeadKind.DETECTION.value and list(self.classes) != DETECTION_CLASSES:
            raise ValueError(f"Detection checkpoints use classes {DETECTION_CLASSES}")
        if self.arch.head == HeadKind.ATTRIBUTION.value and len(self.classes) != self.arch.num_classes:
            raise ValueError("Attribution class list must match the head width")

    @property
    def is_detection(self) -> bool:
        return self.arch.head == HeadKind.DETECTION.value

    @property
    def subset(self) -> PairSubset:
        return self.policy.subset

    def class_index(self, label: str) -> int:
        """
        Head index of a record label

        Detection heads map 'real' to 0 and every other label to 1 ('gan'), so a
        generator name the checkpoint never saw, misspelled or not, still counts as
        'gan'. Only attribution heads reject labels outside their class list.

        Raises:
            ValueError: attribution label not in the checkpoint's classes
        """
        if self.is_detection:
            return 0 if label == DETECTION_CLASSES[0] else 1
        try:
            return self.classes.index(label)
        except ValueError:
            raise ValueError(
                f"Label '{label}' is not in the checkpoint's classes {self.classes}"
            ) from None
