#!/usr/bin/env python3
"""
Checkpoint Store - Portable binary containers for models and feature dumps

Layout of both containers:
    8-byte magic | uint32 LE header length | UTF-8 JSON header | float32 LE blobs

The header lists every blob (name, shape, byte offset) in file order. Files
are written to a temp file in the target directory and renamed into place.
"""

import hashlib
import json
import logging
import os
import struct
import tempfile
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from core.errors import CheckpointFormatError, CheckpointVersionError, ShapeMismatchError
from core.models import (
    CHECKPOINT_FORMAT_VERSION, ArchConfig, ManifestRecord, ModelCheckpoint, PreprocPolicy,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

CHECKPOINT_MAGIC = b"COFORCK1"
FEATURES_MAGIC = b"COFORFT1"
FEATURES_FORMAT_VERSION = 1

_LENGTH = struct.Struct("<I")
_BLOB_DTYPE = np.dtype("<f4")


# ============================================================================
# CONTAINER PRIMITIVES
# ============================================================================

def _encode_container(magic: bytes, header: Dict[str, Any],
                      blobs: List[Tuple[str, np.ndarray]]) -> bytes:
    """Serialize a header plus named float32 blobs; blob offsets are relative to the data section"""
    entries = []
    payload = []
    offset = 0
    for name, array in blobs:
        data = np.ascontiguousarray(array, dtype=_BLOB_DTYPE).tobytes()
        entries.append({"name": name, "shape": list(np.shape(array)), "offset": offset,
                        "nbytes": len(data)})
        payload.append(data)
        offset += len(data)

    header = dict(header, blobs=entries)
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return magic + _LENGTH.pack(len(header_bytes)) + header_bytes + b"".join(payload)


def _decode_container(magic: bytes, raw: bytes) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    """Parse a container, naming the failing section on any inconsistency"""
    if len(raw) < len(magic) or raw[:len(magic)] != magic:
        raise CheckpointFormatError("magic", f"expected {magic.decode('ascii')!r}")

    position = len(magic)
    if len(raw) < position + _LENGTH.size:
        raise CheckpointFormatError("header-length", "file ends before the header length")
    (header_length,) = _LENGTH.unpack_from(raw, position)
    position += _LENGTH.size

    if len(raw) < position + header_length:
        raise CheckpointFormatError(
            "header", f"declares {header_length} bytes, only {len(raw) - position} present"
        )
    try:
        header = json.loads(raw[position:position + header_length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointFormatError("header", f"invalid JSON ({e})") from e
    if not isinstance(header, dict) or not isinstance(header.get("blobs"), list):
        raise CheckpointFormatError("header", "missing blob table")
    position += header_length

    data = memoryview(raw)[position:]
    blobs: Dict[str, np.ndarray] = {}
    expected_end = 0
    for entry in header["blobs"]:
        name = entry.get("name", "?")
        shape = tuple(int(s) for s in entry.get("shape", []))
        offset, nbytes = int(entry.get("offset", -1)), int(entry.get("nbytes", -1))
        if offset != expected_end or nbytes != int(np.prod(shape, dtype=np.int64)) * _BLOB_DTYPE.itemsize:
            raise CheckpointFormatError(f"blob:{name}", "header offsets or sizes are inconsistent")
        if offset + nbytes > len(data):
            raise CheckpointFormatError(f"blob:{name}", "file is truncated")
        array = np.frombuffer(data[offset:offset + nbytes], dtype=_BLOB_DTYPE).reshape(shape)
        blobs[name] = array.astype(np.float32)
        expected_end = offset + nbytes

    if expected_end != len(data):
        raise CheckpointFormatError("blobs", f"{len(data) - expected_end} trailing bytes")
    return header, blobs


def _atomic_write(path: Path, payload: bytes) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, temp_path = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(temp_path, path)
    except BaseException:
        Path(temp_path).unlink(missing_ok=True)
        raise
    return path


def _read(path: PathLike) -> bytes:
    with open(path, "rb") as f:
        return f.read()


def fingerprint(path: PathLike) -> str:
    """SHA-256 of the file bytes, first 12 hex digits"""
    return hashlib.sha256(_read(path)).hexdigest()[:12]


# ============================================================================
# MODEL CHECKPOINTS
# ============================================================================

def expected_shapes(arch: ArchConfig) -> Dict[str, Tuple[int, ...]]:
    """Parameter name -> shape for an architecture, in construction order"""
    from core.network import MiniXception

    model = MiniXception(arch, seed=0)
    return {p.name: p.weights.shape for p in model.params()}


def save_checkpoint(ckpt: ModelCheckpoint, path: PathLike) -> Path:
    """
    Write a checkpoint container

    Saving the same checkpoint twice yields identical bytes.

    Args:
        ckpt: Checkpoint to write
        path: Destination file

    Returns:
        Path written
    """
    header = {
        "format_version": ckpt.format_version,
        "arch": ckpt.arch.to_dict(),
        "classes": list(ckpt.classes),
        "policy": ckpt.policy.to_dict(),
        "policy_fingerprint": ckpt.policy.fingerprint(),
        "metadata": ckpt.metadata,
    }
    payload = _encode_container(CHECKPOINT_MAGIC, header, list(ckpt.params.items()))
    path = _atomic_write(Path(path), payload)
    logger.info("Saved checkpoint %s (%d tensors)", path, len(ckpt.params))
    return path


def load_checkpoint(path: PathLike, verify_shapes: bool = True) -> ModelCheckpoint:
    """
    Read a checkpoint container

    Args:
        path: Checkpoint file
        verify_shapes: Check blob names and shapes against the stored architecture

    Raises:
        CheckpointFormatError: corrupt magic, lengths, header or blobs
        CheckpointVersionError: format version differs from this build's
        ShapeMismatchError: blobs do not match the architecture
    """
    header, blobs = _decode_container(CHECKPOINT_MAGIC, _read(path))

    version = header.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointVersionError(
            f"Checkpoint {path} has format version {version}; "
            f"this build reads version {CHECKPOINT_FORMAT_VERSION}"
        )

    try:
        arch = ArchConfig.from_dict(header["arch"])
        policy = PreprocPolicy.from_dict(header["policy"])
        classes = list(header["classes"])
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointFormatError("header", f"invalid model description ({e})") from e

    if verify_shapes:
        expected = expected_shapes(arch)
        if list(expected) != list(blobs):
            raise ShapeMismatchError(
                f"Checkpoint {path} holds {len(blobs)} tensors, architecture needs {len(expected)}"
            )
        for name, shape in expected.items():
            if blobs[name].shape != shape:
                raise ShapeMismatchError(
                    f"Tensor {name}: architecture needs {shape}, file holds {blobs[name].shape}"
                )

    return ModelCheckpoint(arch=arch, classes=classes, policy=policy, params=blobs,
                           metadata=header.get("metadata", {}), format_version=version)


# ============================================================================
# FEATURE DUMPS
# ============================================================================

def save_features(path: PathLike, features: np.ndarray, records: List[ManifestRecord],
                  policy: PreprocPolicy) -> Path:
    """Write an (N, 256, 256, D) feature array with its records and policy"""
    features = np.asarray(features)
    if features.ndim != 4 or features.shape[0] != len(records):
        raise ShapeMismatchError(
            f"Feature dump needs one (256, 256, D) tensor per record, got {features.shape} "
            f"for {len(records)} records"
        )
    header = {
        "format_version": FEATURES_FORMAT_VERSION,
        "policy": policy.to_dict(),
        "records": [r.to_dict() for r in records],
    }
    return _atomic_write(Path(path), _encode_container(FEATURES_MAGIC, header,
                                                       [("features", features)]))


def load_features(path: PathLike) -> Tuple[np.ndarray, List[ManifestRecord], PreprocPolicy]:
    """Read a feature dump written by save_features"""
    header, blobs = _decode_container(FEATURES_MAGIC, _read(path))
    if header.get("format_version") != FEATURES_FORMAT_VERSION:
        raise CheckpointVersionError(
            f"Feature dump {path} has format version {header.get('format_version')}"
        )
    features: Optional[np.ndarray] = blobs.get("features")
    if features is None:
        raise CheckpointFormatError("blobs", "no 'features' tensor")
    records = [ManifestRecord.from_dict(r) for r in header.get("records", [])]
    if features.shape[0] != len(records):
        raise CheckpointFormatError("records", "record count does not match the tensor")
    return features, records, PreprocPolicy.from_dict(header["policy"])
