#!/usr/bin/env python3
"""
Co-occurrence Features - Directional pixel-pair histograms

For each channel and each pair direction, counts how often value i is
followed by value j at the direction's offset, max-normalizes the 256x256
count matrix, and stacks all matrices in the depth dimension
(channel-major, direction-minor).
"""

from concurrent.futures import ThreadPoolExecutor
from typing import List, Sequence, Tuple, Union

import numpy as np

from core.models import CoocTensor, PairDirection, PairSubset, PixelImage

LEVELS = 256


def _pair_counts(channel: np.ndarray, d_row: int, d_col: int) -> np.ndarray:
    """Count pairs (channel[m, n], channel[m + d_row, n + d_col]) over in-bounds pairs"""
    channel = np.asarray(channel)
    if channel.ndim != 2:
        raise ValueError(f"Expected a 2-D channel, got shape {channel.shape}")
    height, width = channel.shape
    r0, r1 = max(0, -d_row), height - max(0, d_row)
    c0, c1 = max(0, -d_col), width - max(0, d_col)
    if r1 <= r0 or c1 <= c0:
        return np.zeros((LEVELS, LEVELS), dtype=np.int64)
    first = channel[r0:r1, c0:c1].astype(np.int64)
    second = channel[r0 + d_row:r1 + d_row, c0 + d_col:c1 + d_col].astype(np.int64)
    flat = np.bincount((first * LEVELS + second).ravel(), minlength=LEVELS * LEVELS)
    return flat.reshape(LEVELS, LEVELS)


def pair_histogram(channel: np.ndarray, direction: PairDirection) -> np.ndarray:
    """
    Co-occurrence counts of one channel along one direction

    Args:
        channel: 2-D 8-bit array
        direction: Pair direction

    Returns:
        (256, 256) int64 matrix C with C[i, j] = #pairs (first=i, second=j);
        all zeros when the direction has no valid pair
    """
    d_row, d_col = PairDirection(direction).offset
    return _pair_counts(channel, d_row, d_col)


def reversed_pair_histogram(channel: np.ndarray, direction: PairDirection) -> np.ndarray:
    """Counts for the mirrored offset (left, top, top-left, top-right)"""
    d_row, d_col = PairDirection(direction).offset
    return _pair_counts(channel, -d_row, -d_col)


def normalize(counts: np.ndarray) -> np.ndarray:
    """
    Divide a count matrix by its maximum

    Returns:
        float64 matrix with max 1.0, or all zeros when every count is zero
    """
    counts = np.asarray(counts, dtype=np.float64)
    peak = counts.max() if counts.size else 0.0
    if peak <= 0:
        return np.zeros_like(counts)
    return counts / peak


def feature_tensor(img: PixelImage, subset: PairSubset) -> CoocTensor:
    """
    Stack normalized histograms of every (channel, direction) into a 256x256xD tensor

    Slice index = channel * len(subset) + direction index; RGB with all four
    directions gives D = 12, grayscale gives D = len(subset).
    """
    depth = img.channels * len(subset)
    values = np.empty((LEVELS, LEVELS, depth), dtype=np.float32)
    for c in range(img.channels):
        channel = img.channel(c)
        for d, direction in enumerate(subset.directions):
            values[:, :, c * len(subset) + d] = normalize(pair_histogram(channel, direction))
    return CoocTensor(values=values, source_dims=(img.width, img.height),
                      subset=subset, channels=img.channels)


def feature_batch(images: Sequence[PixelImage], subset: PairSubset, threads: int = 1) -> np.ndarray:
    """
    Feature tensors for many images, stacked as an (N, 256, 256, D) float32 array

    Output order follows the input order regardless of worker scheduling.
    """
    if threads <= 1 or len(images) <= 1:
        tensors = [feature_tensor(img, subset).values for img in images]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            tensors = [t.values for t in pool.map(lambda im: feature_tensor(im, subset), images)]
    return np.stack(tensors, axis=0)


def diagonal_mass(features: Union[np.ndarray, CoocTensor]) -> float:
    """
    Fraction of histogram mass on the main diagonal (pairs with equal values)

    Accepts a 256x256 matrix or a 256x256xD tensor; slices are pooled.
    """
    values = features.values if isinstance(features, CoocTensor) else np.asarray(features)
    if values.ndim == 2:
        values = values[:, :, None]
    total = float(values.sum(dtype=np.float64))
    if total <= 0:
        return 0.0
    trace = float(np.einsum("iid->", values.astype(np.float64)))
    return trace / total


def slice_labels(channels: int, subset: PairSubset) -> List[Tuple[int, str]]:
    """(channel, direction) label of every depth slice, in stacking order"""
    return [(c, d.value) for c in range(channels) for d in subset.directions]
