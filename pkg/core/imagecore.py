#!/usr/bin/env python3
"""
Image Core - Decoding, encoding, JPEG recompression and patch extraction
All functions are pure and safe to call from many workers at once
"""

import io
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from core.errors import ImageFormatError
from core.models import PatchSpec, PixelImage

# Pillow modes accepted as-is or after a lossless alpha/palette drop
_DIRECT_MODES = {"L": "L", "RGB": "RGB"}
_CONVERTED_MODES = {"LA": "L", "RGBA": "RGB", "RGBX": "RGB", "P": "RGB", "PA": "RGB", "1": "L"}


def _deep_rawmode(image: Image.Image) -> Optional[str]:
    """Return the first decoder raw mode carrying more than 8 bits per sample, if any"""
    for tile in image.tile:
        args = tile[3] if len(tile) > 3 else None
        rawmode = args if isinstance(args, str) else (args[0] if args else None)
        if isinstance(rawmode, str) and (";16" in rawmode or rawmode.startswith("I;")):
            return rawmode
    return None


def _to_pixel_image(image: Image.Image, source: str) -> PixelImage:
    """Convert a Pillow image to a PixelImage, dropping alpha; reject deep formats"""
    mode = image.mode
    if mode in _DIRECT_MODES:
        converted = image
    elif mode in _CONVERTED_MODES:
        converted = image.convert(_CONVERTED_MODES[mode])
    else:
        raise ImageFormatError(
            f"Unsupported pixel format '{mode}' in {source}: only 8-bit grayscale or RGB "
            f"(optionally with alpha) can be decoded"
        )
    return PixelImage.from_array(np.asarray(converted, dtype=np.uint8))


def decode_image(path: Union[str, Path]) -> PixelImage:
    """
    Decode a PNG or JPEG file into an 8-bit raster

    Args:
        path: Image file path

    Returns:
        PixelImage with 1 (grayscale) or 3 (RGB) channels

    Raises:
        ImageFormatError: unreadable file or unsupported pixel format
    """
    try:
        with Image.open(path) as image:
            if image.format not in ("PNG", "JPEG"):
                raise ImageFormatError(f"Unsupported file format '{image.format}': {path}")
            # 16-bit RGB/RGBA/LA PNGs open with 8-bit modes; only the raw mode tells
            deep = _deep_rawmode(image)
            if deep is not None:
                raise ImageFormatError(
                    f"Unsupported pixel format '{deep}' in {path}: samples deeper than 8 bits"
                )
            image.load()
            return _to_pixel_image(image, str(path))
    except FileNotFoundError:
        raise ImageFormatError(f"File not found: {path}") from None
    except (UnidentifiedImageError, OSError) as e:
        raise ImageFormatError(f"Unreadable image {path}: {e}") from e


def _to_pillow(img: PixelImage) -> Image.Image:
    if img.channels == 1:
        return Image.fromarray(np.ascontiguousarray(img.channel(0)))
    return Image.fromarray(img.as_array())


def encode_png(img: PixelImage, path: Union[str, Path]) -> Path:
    """Write an image losslessly as PNG"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _to_pillow(img).save(path, format="PNG")
    return path


def encode_jpeg(img: PixelImage, path: Union[str, Path], quality: int) -> Path:
    """Write an image as JPEG at the given quality (4:4:4 chroma)"""
    _check_quality(quality)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _to_pillow(img).save(path, format="JPEG", quality=quality, subsampling=0)
    return path


def _check_quality(quality: int) -> None:
    if isinstance(quality, bool) or not isinstance(quality, (int, np.integer)) \
            or not 1 <= quality <= 100:
        raise ValueError(f"JPEG quality must be an integer in [1, 100], got {quality!r}")


def jpeg_recompress(img: PixelImage, quality: Optional[int]) -> PixelImage:
    """
    Run one in-memory JPEG encode/decode cycle

    Args:
        img: 1- or 3-channel image
        quality: JPEG quality in [1, 100], or None for pass-through

    Returns:
        The input unchanged for None, else the decoded JPEG (same dimensions)
    """
    if quality is None:
        return img
    _check_quality(quality)
    buffer = io.BytesIO()
    _to_pillow(img).save(buffer, format="JPEG", quality=int(quality), subsampling=0)
    buffer.seek(0)
    with Image.open(buffer) as decoded:
        decoded.load()
        return _to_pixel_image(decoded, "<jpeg buffer>")


def _axis_offsets(extent: int, size: int, stride: int) -> List[int]:
    """Stride offsets along one axis, with the last window clamped flush to the border"""
    offsets = list(range(0, extent - size + 1, stride))
    if offsets[-1] + size < extent:
        offsets.append(extent - size)
    return offsets


def patch_origins(width: int, height: int, spec: PatchSpec) -> List[Tuple[int, int]]:
    """
    Origins (row, col) of every patch extract_patches would return

    Depends only on the image size and the patch spec.
    """
    if width < spec.size or height < spec.size:
        return [(0, 0)]
    rows = _axis_offsets(height, spec.size, spec.stride)
    cols = _axis_offsets(width, spec.size, spec.stride)
    return [(r, c) for r in rows for c in cols]


def extract_patches(img: PixelImage, spec: PatchSpec) -> List[Tuple[PixelImage, Tuple[int, int]]]:
    """
    Cut an image into axis-aligned patches at stride offsets

    Edge patches are shifted inward rather than padded. When either dimension is
    smaller than the patch size the whole image is returned as the single patch.

    Args:
        img: Source image
        spec: Patch size and stride

    Returns:
        List of (patch, (row, col)) in lexicographic origin order
    """
    if img.width < spec.size or img.height < spec.size:
        return [(img, (0, 0))]
    array = img.as_array()
    patches = []
    for row, col in patch_origins(img.width, img.height, spec):
        window = array[row:row + spec.size, col:col + spec.size]
        patches.append((PixelImage.from_array(window.copy()), (row, col)))
    return patches
