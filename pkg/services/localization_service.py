#!/usr/bin/env python3
"""
Localization Service - Sliding-window GAN heatmaps

Each patch is scored by a detection model; every pixel's score is the mean
probability of all patches covering it. Heatmaps render through a fixed
blue-white-red ramp on the absolute [0, 1] range, with a raw float32
sidecar holding the exact scores.
"""

import logging
import struct
from pathlib import Path
from typing import Callable, Optional, Tuple, Union

import numpy as np

from config.color_scheme import COLORS
from core.categories import DEFAULT_LOCALIZATION_PATCH, DEFAULT_LOCALIZATION_STRIDE
from core.cooccur import feature_batch
from core.errors import CheckpointFormatError, ConfigurationError, DepthMismatchError
from core.imagecore import encode_png, extract_patches
from core.models import Heatmap, ModelCheckpoint, PairSubset, PatchSpec, PixelImage

logger = logging.getLogger(__name__)

# Maps an (N, 256, 256, D) feature batch to N probabilities
Scorer = Callable[[np.ndarray], np.ndarray]

DEFAULT_PATCH = PatchSpec(DEFAULT_LOCALIZATION_PATCH, DEFAULT_LOCALIZATION_STRIDE)

SIDECAR_MAGIC = b"CFHM"
SIDECAR_VERSION = 1
_SIDECAR_HEADER = struct.Struct("<4sIII")
SIDECAR_SUFFIX = ".cfhm"


def checkpoint_scorer(ckpt: ModelCheckpoint) -> Scorer:
    """Scorer backed by a detection checkpoint (read-only, thread-safe)"""
    if not ckpt.is_detection:
        raise ConfigurationError(
            "Localization needs a detection checkpoint; this one is an attribution model "
            f"over {ckpt.classes}"
        )
    from services.training_service import model_from_checkpoint

    model = model_from_checkpoint(ckpt)
    return lambda batch: model.predict(batch)[:, 0]


def heatmap(img: PixelImage, ckpt: Optional[ModelCheckpoint] = None,
            patch: PatchSpec = DEFAULT_PATCH, subset: Optional[PairSubset] = None,
            scorer: Optional[Scorer] = None, threads: int = 1, chunk: int = 32) -> Heatmap:
    """
    Per-pixel mean patch score

    Args:
        img: Source image
        ckpt: Detection checkpoint (needed unless a scorer is injected)
        patch: Window size and stride
        subset: Pair subset (defaults to the checkpoint's)
        scorer: Optional batch scorer replacing the checkpoint model
        threads: Feature workers
        chunk: Patches scored per batch

    Returns:
        Heatmap with float32 scores and int coverage, aligned to img

    Raises:
        ConfigurationError: attribution checkpoint, or neither checkpoint nor scorer
        DepthMismatchError: subset depth differs from the checkpoint's input depth
    """
    if scorer is None:
        if ckpt is None:
            raise ConfigurationError("heatmap needs a checkpoint or a scorer")
        scorer = checkpoint_scorer(ckpt)
    if subset is None:
        if ckpt is None:
            raise ConfigurationError("heatmap needs a pair subset when no checkpoint is given")
        subset = ckpt.subset
    if ckpt is not None and img.channels * len(subset) != ckpt.arch.input_depth:
        raise DepthMismatchError(ckpt.arch.input_depth, img.channels * len(subset), "checkpoint")

    patches = extract_patches(img, patch)
    totals = np.zeros((img.height, img.width), dtype=np.float64)
    coverage = np.zeros((img.height, img.width), dtype=np.int64)
    for start in range(0, len(patches), chunk):
        group = patches[start:start + chunk]
        features = feature_batch([p for p, _ in group], subset, threads)
        scores = np.asarray(scorer(features), dtype=np.float64).reshape(-1)
        if scores.shape[0] != len(group):
            raise ValueError(f"Scorer returned {scores.shape[0]} scores for {len(group)} patches")
        for (window, (row, col)), score in zip(group, scores):
            totals[row:row + window.height, col:col + window.width] += score
            coverage[row:row + window.height, col:col + window.width] += 1

    scores = (totals / np.maximum(coverage, 1)).astype(np.float32)
    logger.info("Heatmap %dx%d from %d patches (%d/%d): mean %.4f",
                img.width, img.height, len(patches), patch.size, patch.stride, float(scores.mean()))
    return Heatmap(scores=scores, coverage=coverage, patch=patch)


def coverage_map(width: int, height: int, patch: PatchSpec) -> np.ndarray:
    """Patch count per pixel; depends only on size and patch spec"""
    blank = PixelImage.from_array(np.zeros((height, width), dtype=np.uint8))
    coverage = np.zeros((height, width), dtype=np.int64)
    for window, (row, col) in extract_patches(blank, patch):
        coverage[row:row + window.height, col:col + window.width] += 1
    return coverage


# ============================================================================
# RENDERING
# ============================================================================

def colorize(scores: np.ndarray) -> np.ndarray:
    """(H, W, 3) uint8 colors of the heatmap ramp"""
    rgba = COLORS.heatmap_colormap()(COLORS.heatmap_norm()(np.asarray(scores, dtype=np.float64)))
    return np.round(np.asarray(rgba)[..., :3] * 255).astype(np.uint8)


def sidecar_path(png_path: Union[str, Path]) -> Path:
    return Path(png_path).with_suffix(SIDECAR_SUFFIX)


def write_sidecar(hm: Heatmap, path: Union[str, Path]) -> Path:
    """Raw scores: 16-byte header (magic, version, height, width), then float32 LE"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = _SIDECAR_HEADER.pack(SIDECAR_MAGIC, SIDECAR_VERSION, hm.height, hm.width)
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(hm.scores, dtype="<f4").tobytes())
    return path


def read_sidecar(path: Union[str, Path]) -> np.ndarray:
    """Scores from a sidecar written by write_sidecar"""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _SIDECAR_HEADER.size:
        raise CheckpointFormatError("header", "sidecar shorter than its header")
    magic, version, height, width = _SIDECAR_HEADER.unpack_from(raw)
    if magic != SIDECAR_MAGIC:
        raise CheckpointFormatError("magic", "expected 'CFHM'")
    if version != SIDECAR_VERSION:
        raise CheckpointFormatError("header", f"unsupported sidecar version {version}")
    body = raw[_SIDECAR_HEADER.size:]
    if len(body) != height * width * 4:
        raise CheckpointFormatError("scores", f"expected {height * width} floats")
    return np.frombuffer(body, dtype="<f4").reshape(height, width).astype(np.float32)


def render(hm: Heatmap, out_path: Union[str, Path]) -> Tuple[Path, Path]:
    """
    Write the heatmap PNG and its raw-score sidecar

    Returns:
        (png path, sidecar path)
    """
    png = encode_png(PixelImage.from_array(colorize(hm.scores)), out_path)
    side = write_sidecar(hm, sidecar_path(png))
    logger.info("Wrote heatmap %s and sidecar %s", png, side)
    return png, side


# ============================================================================
# COMPOSITE ANALYSIS
# ============================================================================

def band_mask(width: int, height: int, band: int, split_col: Optional[int] = None) -> np.ndarray:
    """True outside a vertical band of the given width centered on split_col"""
    split_col = width // 2 if split_col is None else split_col
    cols = np.arange(width)
    keep = (cols < split_col - band // 2) | (cols >= split_col + (band - band // 2))
    return np.broadcast_to(keep, (height, width)).copy()


def half_means(hm: Heatmap, band: int, split_col: Optional[int] = None) -> Tuple[float, float]:
    """Mean score of the left and right halves, excluding the boundary band"""
    split_col = hm.width // 2 if split_col is None else split_col
    mask = band_mask(hm.width, hm.height, band, split_col)
    cols = np.arange(hm.width)[None, :].repeat(hm.height, axis=0)
    left = hm.scores[mask & (cols < split_col)]
    right = hm.scores[mask & (cols >= split_col)]
    if left.size == 0 or right.size == 0:
        raise ValueError(f"Band of {band} pixels leaves an empty half")
    return float(left.mean()), float(right.mean())
