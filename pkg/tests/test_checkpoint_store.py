#!/usr/bin/env python3
"""Test checkpoint and feature-dump containers"""

import tempfile
from pathlib import Path

import numpy as np
import pytest

from controllers.checkpoint_store import (
    CHECKPOINT_MAGIC, fingerprint, load_checkpoint, load_features, save_checkpoint, save_features,
)
from core.cooccur import feature_tensor
from core.errors import (
    CheckpointFormatError, CheckpointVersionError, DepthMismatchError, ShapeMismatchError,
)
from core.models import (
    ArchConfig, ManifestRecord, ModelCheckpoint, PairSubset, PatchSpec, PixelImage, PreprocPolicy,
)
from core.network import build
from services.training_service import model_from_checkpoint


def _checkpoint(subset="hv", seed=0, **kwargs):
    depth = 3 * len(PairSubset.from_tag(subset))
    arch = ArchConfig.preset("micro", depth)
    model = build(arch, seed=seed)
    policy = PreprocPolicy(jpeg_qualities=[85], patch=PatchSpec(64, 32),
                           subset=PairSubset.from_tag(subset), rng_seed=3)
    return ModelCheckpoint(arch, ["real", "gan"], policy, model.state_dict(),
                           metadata={"best_epoch": 2, "history": []}, **kwargs)


def test_round_trip_is_bit_exact():
    """Test every tensor, the policy and the classes survive save/load unchanged"""
    ckpt = _checkpoint()
    with tempfile.TemporaryDirectory() as tmp:
        path = save_checkpoint(ckpt, Path(tmp) / "model.ckpt")
        assert path.read_bytes().startswith(CHECKPOINT_MAGIC)
        assert [p.name for p in Path(tmp).iterdir()] == ["model.ckpt"]

        loaded = load_checkpoint(path)
        assert loaded.arch == ckpt.arch
        assert loaded.classes == ckpt.classes
        assert loaded.policy.to_dict() == ckpt.policy.to_dict()
        assert loaded.metadata == ckpt.metadata
        assert list(loaded.params) == list(ckpt.params)
        for name, value in ckpt.params.items():
            assert loaded.params[name].tobytes() == value.tobytes(), name

        rng = np.random.default_rng(0)
        batch = rng.random((2, 256, 256, 6)).astype(np.float32)
        original = build(ckpt.arch, seed=0).predict(batch)
        assert np.array_equal(model_from_checkpoint(loaded).predict(batch), original)

    print("✓ Checkpoint round-trip test passed")


def test_saving_twice_gives_identical_bytes():
    """Test serialization is deterministic"""
    ckpt = _checkpoint(seed=4)
    with tempfile.TemporaryDirectory() as tmp:
        a = save_checkpoint(ckpt, Path(tmp) / "a.ckpt")
        b = save_checkpoint(ckpt, Path(tmp) / "b.ckpt")
        assert a.read_bytes() == b.read_bytes()
        assert fingerprint(a) == fingerprint(b)
        assert fingerprint(a) != fingerprint(save_checkpoint(_checkpoint(seed=5),
                                                             Path(tmp) / "c.ckpt"))

    print("✓ Deterministic bytes test passed")


def test_truncated_and_corrupt_files():
    """Test damaged containers raise CheckpointFormatError naming the section"""
    with tempfile.TemporaryDirectory() as tmp:
        path = save_checkpoint(_checkpoint(), Path(tmp) / "model.ckpt")
        raw = path.read_bytes()
        cases = {
            "magic": b"NOTACKPT" + raw[8:],
            "header-length": raw[:10],
            "header": raw[:40],
        }
        for section, payload in cases.items():
            path.write_bytes(payload)
            with pytest.raises(CheckpointFormatError) as info:
                load_checkpoint(path)
            assert info.value.section == section

        path.write_bytes(raw[:-8])
        with pytest.raises(CheckpointFormatError) as info:
            load_checkpoint(path)
        assert info.value.section.startswith("blob:")

        path.write_bytes(raw + b"\x00\x00\x00\x00")
        with pytest.raises(CheckpointFormatError) as info:
            load_checkpoint(path)
        assert info.value.section == "blobs"

    print("✓ Corrupt container test passed")


def test_version_mismatch():
    """Test a checkpoint from another format version is refused"""
    with tempfile.TemporaryDirectory() as tmp:
        path = save_checkpoint(_checkpoint(format_version=99), Path(tmp) / "future.ckpt")
        with pytest.raises(CheckpointVersionError):
            load_checkpoint(path)

    print("✓ Version mismatch test passed")


def test_shape_verification():
    """Test blobs that do not fit the stored architecture are refused"""
    ckpt = _checkpoint()
    name = next(iter(ckpt.params))
    ckpt.params[name] = np.zeros((1, 1), dtype=np.float32)
    with tempfile.TemporaryDirectory() as tmp:
        path = save_checkpoint(ckpt, Path(tmp) / "bad.ckpt")
        with pytest.raises(ShapeMismatchError):
            load_checkpoint(path)
        assert load_checkpoint(path, verify_shapes=False).params[name].shape == (1, 1)

    print("✓ Shape verification test passed")


def test_depth_mismatch_on_inference():
    """Test an HV checkpoint fed HVDA features reports 6 versus 12"""
    with tempfile.TemporaryDirectory() as tmp:
        loaded = load_checkpoint(save_checkpoint(_checkpoint("hv"), Path(tmp) / "hv.ckpt"))
    img = PixelImage.from_array(np.random.default_rng(1).integers(0, 256, (16, 16, 3), np.uint8))
    features = feature_tensor(img, PairSubset.from_tag("hvda"))
    with pytest.raises(DepthMismatchError) as info:
        model_from_checkpoint(loaded).predict(features.values[None])
    assert (info.value.expected, info.value.actual) == (6, 12)

    print("✓ Depth mismatch test passed")


def test_feature_dump_round_trip():
    """Test feature dumps keep tensors, records and policy"""
    rng = np.random.default_rng(2)
    features = rng.random((3, 256, 256, 2)).astype(np.float32)
    records = [ManifestRecord(path=f"{i}.png", label="real", group_id=str(i), split="train")
               for i in range(3)]
    policy = PreprocPolicy(subset=PairSubset.from_tag("h"))
    with tempfile.TemporaryDirectory() as tmp:
        path = save_features(Path(tmp) / "train.features", features, records, policy)
        loaded, loaded_records, loaded_policy = load_features(path)
        assert np.array_equal(loaded, features)
        assert loaded_records == records
        assert loaded_policy.to_dict() == policy.to_dict()

        with pytest.raises(ShapeMismatchError):
            save_features(Path(tmp) / "x.features", features, records[:2], policy)
        with pytest.raises(CheckpointFormatError):
            load_checkpoint(path)

    print("✓ Feature dump test passed")


if __name__ == "__main__":
    print("Testing checkpoint_store.py...")
    test_round_trip_is_bit_exact()
    test_saving_twice_gives_identical_bytes()
    test_truncated_and_corrupt_files()
    test_version_mismatch()
    test_shape_verification()
    test_depth_mismatch_on_inference()
    test_feature_dump_round_trip()
    print("\n✅ All checkpoint store tests passed!")
