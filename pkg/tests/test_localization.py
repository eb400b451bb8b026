#!/usr/bin/env python3
"""Test sliding-window heatmaps, rendering and sidecars"""

import tempfile
from pathlib import Path

import numpy as np
import pytest

from config.color_scheme import COLORS
from core.cooccur import feature_tensor
from core.errors import CheckpointFormatError, ConfigurationError, DepthMismatchError
from core.imagecore import decode_image
from core.models import (
    ArchConfig, HeadKind, Heatmap, ModelCheckpoint, PairSubset, PatchSpec, PixelImage,
    PreprocPolicy,
)
from core.network import build
from core.nn import AdamConfig
from services.dataset_service import split_manifest
from services.localization_service import (
    band_mask, colorize, coverage_map, half_means, heatmap, read_sidecar, render, sidecar_path,
)
from services.synth_service import default_spec, synth_generate
from services.training_service import TrainConfig, train
from utils.composites import composite_image, create_composites

HV = PairSubset.from_tag("hv")


def _noise(height, width, channels=3, seed=0):
    rng = np.random.default_rng(seed)
    shape = (height, width, channels) if channels > 1 else (height, width)
    return PixelImage.from_array(rng.integers(0, 256, size=shape, dtype=np.uint8))


def _checkpoint(head=HeadKind.DETECTION.value, depth=12, subset="hvda"):
    classes = ["real", "gan"] if head == HeadKind.DETECTION.value else ["real", "a", "b"]
    arch = ArchConfig.preset("micro", depth, head, len(classes))
    model = build(arch, seed=3)
    policy = PreprocPolicy(subset=PairSubset.from_tag(subset))
    return ModelCheckpoint(arch, classes, policy, model.state_dict()), model


def test_constant_scorer():
    """Test a constant 0.7 scorer gives 0.7 everywhere at any stride"""
    img = _noise(40, 50)
    for stride in (3, 8, 16):
        hm = heatmap(img, patch=PatchSpec(16, stride), subset=HV,
                     scorer=lambda batch: np.full(len(batch), 0.7))
        assert hm.scores.shape == (40, 50)
        assert np.allclose(hm.scores, 0.7)
        assert (hm.coverage >= 1).all()

    print("✓ Constant scorer test passed")


def test_three_patch_layout():
    """Test three overlapping patches scored (0, 1, 1) give coverage-weighted means"""
    img = _noise(2, 4, channels=1)
    hm = heatmap(img, patch=PatchSpec(2, 1), subset=HV,
                 scorer=lambda batch: np.array([0.0, 1.0, 1.0]))
    expected_row = [0.0, 0.5, 1.0, 1.0]
    assert hm.scores.tolist() == [expected_row, expected_row]
    assert hm.coverage.tolist() == [[1, 2, 2, 1], [1, 2, 2, 1]]

    print("✓ Three-patch test passed")


def test_coverage_map_matches_heatmap():
    """Test coverage depends only on the image size and patch spec"""
    spec = PatchSpec(8, 3)
    hm = heatmap(_noise(20, 25, channels=1), patch=spec, subset=HV,
                 scorer=lambda batch: np.zeros(len(batch)))
    assert np.array_equal(coverage_map(25, 20, spec), hm.coverage)

    print("✓ Coverage map test passed")


def test_small_image_uses_whole_image_score():
    """Test an image smaller than the patch gets the uniform whole-image score"""
    ckpt, model = _checkpoint()
    img = _noise(100, 100)
    hm = heatmap(img, ckpt, patch=PatchSpec(128, 8))
    whole = model.predict(feature_tensor(img, ckpt.subset).values[None])[0, 0]
    assert np.allclose(hm.scores, np.float32(whole))
    assert (hm.coverage == 1).all()

    print("✓ Small image heatmap test passed")


def test_attribution_checkpoint_rejected():
    """Test localization refuses attribution checkpoints"""
    ckpt, _ = _checkpoint(head=HeadKind.ATTRIBUTION.value)
    with pytest.raises(ConfigurationError):
        heatmap(_noise(32, 32), ckpt, patch=PatchSpec(16, 16))

    print("✓ Attribution rejection test passed")


def test_depth_mismatch_rejected():
    """Test an HV subset against an HVDA checkpoint raises with both depths"""
    ckpt, _ = _checkpoint()
    with pytest.raises(DepthMismatchError) as info:
        heatmap(_noise(32, 32), ckpt, patch=PatchSpec(16, 16), subset=HV)
    assert (info.value.expected, info.value.actual) == (12, 6)

    print("✓ Depth mismatch test passed")


def test_ramp_endpoints():
    """Test all-zero renders blue and all-one renders red"""
    low, high = COLORS.endpoint_rgb()
    assert low == (0, 0, 255)
    assert high == (255, 0, 0)
    assert (colorize(np.zeros((3, 3))) == [0, 0, 255]).all()
    assert (colorize(np.ones((3, 3))) == [255, 0, 0]).all()

    mid = colorize(np.full((1, 1), 0.5))[0, 0]
    assert mid.min() >= 250

    print("✓ Ramp endpoint test passed")


def test_render_and_sidecar_round_trip():
    """Test the PNG matches the ramp and the sidecar returns exact scores"""
    rng = np.random.default_rng(1)
    scores = rng.random((12, 17)).astype(np.float32)
    hm = Heatmap(scores=scores, coverage=np.ones((12, 17), dtype=np.int64),
                 patch=PatchSpec(4, 2))
    with tempfile.TemporaryDirectory() as tmp:
        png, side = render(hm, Path(tmp) / "image_heatmap.png")
        assert side == sidecar_path(png)
        assert np.array_equal(read_sidecar(side), scores)

        picture = decode_image(png)
        assert (picture.width, picture.height, picture.channels) == (17, 12, 3)
        assert np.array_equal(picture.as_array(), colorize(scores))

    print("✓ Render round-trip test passed")


def test_corrupt_sidecar():
    """Test bad magic and truncated bodies raise CheckpointFormatError"""
    hm = Heatmap(scores=np.zeros((2, 2), dtype=np.float32),
                 coverage=np.ones((2, 2), dtype=np.int64), patch=PatchSpec(2, 1))
    with tempfile.TemporaryDirectory() as tmp:
        _, side = render(hm, Path(tmp) / "x.png")
        raw = side.read_bytes()

        side.write_bytes(raw[:-4])
        with pytest.raises(CheckpointFormatError) as info:
            read_sidecar(side)
        assert info.value.section == "scores"

        side.write_bytes(b"XXXX" + raw[4:])
        with pytest.raises(CheckpointFormatError) as info:
            read_sidecar(side)
        assert info.value.section == "magic"

    print("✓ Corrupt sidecar test passed")


def test_band_mask_and_half_means():
    """Test the boundary band is excluded from both half means"""
    mask = band_mask(10, 2, band=4)
    assert mask[0].tolist() == [True, True, True, False, False, False, False, True, True, True]

    scores = np.zeros((4, 10), dtype=np.float32)
    scores[:, 5:] = 1.0
    scores[:, 4:6] = 0.5
    hm = Heatmap(scores=scores, coverage=np.ones((4, 10), dtype=np.int64), patch=PatchSpec(2, 1))
    assert half_means(hm, band=4) == (0.0, 1.0)
    with pytest.raises(ValueError):
        half_means(hm, band=10)

    print("✓ Band mask test passed")


def test_composite_image():
    """Test composites take each half from one source"""
    left = PixelImage.from_array(np.zeros((4, 6, 3), dtype=np.uint8))
    right = PixelImage.from_array(np.full((4, 6, 3), 200, dtype=np.uint8))
    joined = composite_image(left, right).as_array()
    assert (joined[:, :3] == 0).all() and (joined[:, 3:] == 200).all()
    with pytest.raises(ValueError):
        composite_image(left, PixelImage.from_array(np.zeros((4, 4, 3), dtype=np.uint8)))

    print("✓ Composite test passed")


@pytest.mark.slow
def test_trained_detector_localizes_composites():
    """Test real and gan halves of 200 composites separate by at least 0.3 in mean score"""
    with tempfile.TemporaryDirectory() as tmp:
        spec = default_spec(2, image_size=128, images_per_class=200, rng_seed=0)
        records = split_manifest(synth_generate(spec, Path(tmp) / "corpus", show_progress=False),
                                 fractions=(0.8, 0.1, 0.1), seed=0)
        model = build(ArchConfig.preset("micro", 6), seed=0)
        config = TrainConfig(epochs=10, batches_per_epoch=10, val_batches=2, batch_size=16,
                             show_progress=False, cache_features=True, adam=AdamConfig(lr=1e-3))
        ckpt = train(model, records, PreprocPolicy(subset=HV), config)
        assert ckpt.metadata["best_val_acc"] >= 0.9

        gaps = []
        for path, split_col in create_composites(Path(tmp) / "composites", count=200, size=256):
            hm = heatmap(decode_image(path), ckpt, patch=PatchSpec(128, 32))
            real_mean, gan_mean = half_means(hm, band=128, split_col=split_col)
            gaps.append(gan_mean - real_mean)

    assert float(np.mean(gaps)) >= 0.3

    print("✓ Composite localization test passed")


if __name__ == "__main__":
    print("Testing localization_service.py...")
    test_constant_scorer()
    test_three_patch_layout()
    test_coverage_map_matches_heatmap()
    test_small_image_uses_whole_image_score()
    test_attribution_checkpoint_rejected()
    test_depth_mismatch_rejected()
    test_ramp_endpoints()
    test_render_and_sidecar_round_trip()
    test_corrupt_sidecar()
    test_band_mask_and_half_means()
    test_composite_image()
    print("\n✅ All localization tests passed!")
