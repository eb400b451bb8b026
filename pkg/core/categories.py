#!/usr/bin/env python3
"""
Category Taxonomies for GAN Forensics
Defines class names, JPEG quality sets, pair-direction presets, patch sizes
and the synthetic corpus presets
"""

from typing import List, Optional, Sequence, Tuple

# ============================================================================
# CLASS NAMES
# ============================================================================

REAL_CLASS = "real"
GAN_CLASS = "gan"

# Detection heads always use this order: index 0 = authentic, index 1 = generated
DETECTION_CLASSES = [REAL_CLASS, GAN_CLASS]

# Generator families used by the 6-class attribution preset
GAN_FAMILIES = [
    "stargan",
    "cyclegan",
    "progan",
    "spade",
    "stylegan",
]

ATTRIBUTION_CLASSES = [REAL_CLASS] + GAN_FAMILIES

# ============================================================================
# PREPROCESSING
# ============================================================================

# None means "no JPEG compression"
JPEG_QUALITIES: List[Optional[int]] = [75, 85, 90, None]

JPEG_FLAG_VALUES = {
    "none": [None],
    "75": [75],
    "85": [85],
    "90": [90],
    "mixed": list(JPEG_QUALITIES),
}

PATCH_SIZES = [64, 128, 256]

DEFAULT_LOCALIZATION_PATCH = 128
DEFAULT_LOCALIZATION_STRIDE = 8

# Pair subset presets, keyed by their CLI tag
PAIR_PRESETS = {
    "h": ["horizontal"],
    "v": ["vertical"],
    "hv": ["horizontal", "vertical"],
    "hvda": ["horizontal", "vertical", "diagonal", "antidiagonal"],
}

# ============================================================================
# SYNTHETIC CORPUS PRESETS
# ============================================================================

SYNTH_DETECTION_PRESET = {
    "class_names": [REAL_CLASS, GAN_CLASS],
    "autocorrelation_lengths": [1.0, 2.5],
    "quantization_steps": [1, 3],
    "noise_amplitudes": [1.0, 1.0],
    "image_size": 256,
    "images_per_class": 2000,
}

SYNTH_ATTRIBUTION_PRESET = {
    "class_names": list(ATTRIBUTION_CLASSES),
    "autocorrelation_lengths": [1.0, 1.3, 1.6, 1.9, 2.2, 2.5],
    "quantization_steps": [1, 2, 3, 4, 5, 6],
    "noise_amplitudes": [1.0, 1.0, 1.0, 1.0, 1.0, 1.0],
    "image_size": 256,
    "images_per_class": 2000,
}

# ============================================================================
# HELPER FUNCTIONS
# ============================================================================

def jpeg_tag(quality: Optional[int]) -> str:
    """Render a JPEG quality for tables and file names ("none" for no compression)"""
    return "none" if quality is None else str(quality)


def parse_jpeg_flag(value: str) -> List[Optional[int]]:
    """
    Translate a --jpeg flag value into a list of qualities

    Args:
        value: One of none, 75, 85, 90, mixed, or any integer 1-100

    Returns:
        List of qualities (None = no compression)
    """
    key = value.strip().lower()
    if key in JPEG_FLAG_VALUES:
        return list(JPEG_FLAG_VALUES[key])
    quality = int(key)
    if not 1 <= quality <= 100:
        raise ValueError(f"JPEG quality must be in [1, 100], got {quality}")
    return [quality]


def synth_preset(class_count: int) -> dict:
    """
    Get the synthetic preset for a class count

    2 classes gives the detection preset; 3-6 classes take the first
    class_count entries of the attribution preset.
    """
    if class_count == 2:
        return {k: (list(v) if isinstance(v, list) else v)
                for k, v in SYNTH_DETECTION_PRESET.items()}
    if not 2 < class_count <= 6:
        raise ValueError(f"Synthetic corpora support 2-6 classes, got {class_count}")
    preset = {}
    for key, value in SYNTH_ATTRIBUTION_PRESET.items():
        preset[key] = list(value[:class_count]) if isinstance(value, list) else value
    return preset


def validate_qualities(qualities: Sequence[Optional[int]]) -> Tuple[bool, str]:
    """
    Validate a JPEG quality list

    Returns:
        Tuple of (is_valid, error_message)
    """
    if not qualities:
        return False, "At least one JPEG quality is required"
    for q in qualities:
        if q is None:
            continue
        if not isinstance(q, int) or not 1 <= q <= 100:
            return False, f"Invalid JPEG quality: {q}"
    return True, ""


def validate_class_names(names: Sequence[str]) -> Tuple[bool, str]:
    """
    Validate an ordered class list for a checkpoint head

    Returns:
        Tuple of (is_valid, error_message)
    """
    if len(names) < 2:
        return False, "At least two classes are required"
    if len(set(names)) != len(names):
        return False, "Class names must be unique"
    for name in names:
        if not name or not name.strip():
            return False, "Class names must be nonempty"
    return True, ""
