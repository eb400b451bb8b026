#!/usr/bin/env python3
"""Test image decoding, JPEG recompression and patch extraction"""

import struct
import tempfile
import zlib
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from core.errors import ImageFormatError
from core.imagecore import (
    decode_image, encode_jpeg, encode_png, extract_patches, jpeg_recompress, patch_origins,
)
from core.models import PatchSpec, PixelImage


def _noise(size, channels=3, seed=0):
    rng = np.random.default_rng(seed)
    shape = (size, size, channels) if channels > 1 else (size, size)
    return PixelImage.from_array(rng.integers(0, 256, size=shape, dtype=np.uint8))


def _png_chunk(kind: bytes, payload: bytes) -> bytes:
    return (struct.pack(">I", len(payload)) + kind + payload
            + struct.pack(">I", zlib.crc32(kind + payload) & 0xFFFFFFFF))


def _write_deep_png(path, width, height, color_type, channels, value):
    """Write a 16-bit-per-sample PNG by hand (Pillow cannot save deep RGB)"""
    header = struct.pack(">IIBBBBB", width, height, 16, color_type, 0, 0, 0)
    row = b"\x00" + struct.pack(">H", value) * (width * channels)
    path.write_bytes(b"\x89PNG\r\n\x1a\n" + _png_chunk(b"IHDR", header)
                     + _png_chunk(b"IDAT", zlib.compress(row * height))
                     + _png_chunk(b"IEND", b""))


def test_decode_constant_rgb():
    """Test a 2x2 black RGB PNG decodes to zeros"""
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "black.png"
        Image.fromarray(np.zeros((2, 2, 3), dtype=np.uint8)).save(path)

        img = decode_image(path)
        assert (img.width, img.height, img.channels) == (2, 2, 3)
        assert not img.data.any()

    print("✓ Constant RGB decode test passed")


def test_decode_single_gray_sample():
    """Test a 1x1 grayscale PNG keeps one channel"""
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "white.png"
        Image.fromarray(np.full((1, 1), 255, dtype=np.uint8)).save(path)

        img = decode_image(path)
        assert (img.width, img.height, img.channels) == (1, 1, 1)
        assert img.data.tolist() == [255]

    print("✓ Single sample decode test passed")


def test_png_lossless():
    """Test PNG encode then decode is bit-identical"""
    img = _noise(16)
    with tempfile.TemporaryDirectory() as tmp:
        decoded = decode_image(encode_png(img, Path(tmp) / "noise.png"))
    assert decoded == img

    print("✓ Lossless PNG test passed")


def test_alpha_is_dropped():
    """Test RGBA input decodes to 3 channels"""
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "alpha.png"
        Image.fromarray(np.full((4, 4, 4), 9, dtype=np.uint8)).save(path)
        img = decode_image(path)
    assert img.channels == 3
    assert (img.data == 9).all()

    print("✓ Alpha drop test passed")


def test_decode_rejects_16_bit():
    """Test a 16-bit grayscale PNG is refused, not truncated"""
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "deep.png"
        Image.fromarray(np.full((4, 4), 40000, dtype=np.uint16)).save(path)
        with pytest.raises(ImageFormatError):
            decode_image(path)

    print("✓ 16-bit rejection test passed")


def test_decode_rejects_48_bit_rgb():
    """Test 16-bit-per-channel RGB, RGBA and gray+alpha PNGs are refused, not truncated"""
    with tempfile.TemporaryDirectory() as tmp:
        for color_type, channels in ((2, 3), (6, 4), (4, 2)):
            path = Path(tmp) / f"deep_{color_type}.png"
            _write_deep_png(path, 4, 3, color_type, channels, 40000)
            with pytest.raises(ImageFormatError, match="deeper than 8 bits"):
                decode_image(path)

    print("✓ 48-bit RGB rejection test passed")


def test_decode_unreadable_file():
    """Test garbage bytes and missing files raise ImageFormatError"""
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "garbage.png"
        path.write_bytes(b"not an image at all")
        with pytest.raises(ImageFormatError):
            decode_image(path)
        with pytest.raises(ImageFormatError):
            decode_image(Path(tmp) / "missing.png")

    print("✓ Unreadable file test passed")


def test_jpeg_pass_through():
    """Test quality None returns the same image"""
    img = _noise(8)
    assert jpeg_recompress(img, None) is img

    print("✓ JPEG pass-through test passed")


def test_jpeg_uniform_gray_survives():
    """Test a uniform gray image stays within 1 level at quality 90"""
    img = PixelImage.from_array(np.full((64, 64, 3), 128, dtype=np.uint8))
    out = jpeg_recompress(img, 90)
    diff = np.abs(out.as_array().astype(int) - img.as_array().astype(int))
    assert (out.width, out.height) == (64, 64)
    assert diff.max() <= 1

    print("✓ Uniform JPEG test passed")


def test_jpeg_changes_noise():
    """Test noise at quality 75 keeps dimensions but changes samples"""
    img = _noise(64)
    out = jpeg_recompress(img, 75)
    assert (out.width, out.height, out.channels) == (64, 64, 3)
    assert not np.array_equal(out.data, img.data)

    print("✓ Noisy JPEG test passed")


def test_jpeg_rejects_bad_quality():
    """Test qualities outside [1, 100] are refused"""
    img = _noise(8)
    for quality in (0, 101, 50.5):
        with pytest.raises(ValueError):
            jpeg_recompress(img, quality)
    with tempfile.TemporaryDirectory() as tmp:
        with pytest.raises(ValueError):
            encode_jpeg(img, Path(tmp) / "x.jpg", 0)

    print("✓ JPEG quality validation test passed")


def test_patches_exact_tiling():
    """Test 256x256 at size 128 stride 128 gives four tiles"""
    img = _noise(256, channels=1)
    patches = extract_patches(img, PatchSpec(128, 128))
    assert [origin for _, origin in patches] == [(0, 0), (0, 128), (128, 0), (128, 128)]
    first, _ = patches[0]
    assert np.array_equal(first.channel(0), img.channel(0)[:128, :128])

    print("✓ Exact tiling test passed")


def test_patches_small_image_is_whole():
    """Test an image smaller than the patch is returned whole"""
    img = _noise(100)
    patches = extract_patches(img, PatchSpec(128, 8))
    assert len(patches) == 1
    assert patches[0][0] is img
    assert patches[0][1] == (0, 0)

    print("✓ Small image patch test passed")


def test_patches_clamped_edge():
    """Test 130x130 at size 128 stride 8 clamps the last offset to 2"""
    origins = patch_origins(130, 130, PatchSpec(128, 8))
    assert origins == [(0, 0), (0, 2), (2, 0), (2, 2)]
    patches = extract_patches(_noise(130), PatchSpec(128, 8))
    assert all(p.width == 128 and p.height == 128 for p, _ in patches)

    print("✓ Clamped edge test passed")


def test_patch_origins_cover_every_pixel():
    """Test every pixel lies inside at least one patch"""
    spec = PatchSpec(64, 24)
    covered = np.zeros((150, 170), dtype=bool)
    for row, col in patch_origins(170, 150, spec):
        covered[row:row + 64, col:col + 64] = True
    assert covered.all()

    print("✓ Patch coverage test passed")


if __name__ == "__main__":
    print("Testing imagecore.py...")
    test_decode_constant_rgb()
    test_decode_single_gray_sample()
    test_png_lossless()
    test_alpha_is_dropped()
    test_decode_rejects_16_bit()
    test_decode_rejects_48_bit_rgb()
    test_decode_unreadable_file()
    test_jpeg_pass_through()
    test_jpeg_uniform_gray_survives()
    test_jpeg_changes_noise()
    test_jpeg_rejects_bad_quality()
    test_patches_exact_tiling()
    test_patches_small_image_is_whole()
    test_patches_clamped_edge()
    test_patch_origins_cover_every_pixel()
    print("\n✅ All imagecore tests passed!")
