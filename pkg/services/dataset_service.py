#!/usr/bin/env python3
"""
Dataset Service - Manifest splitting, batching and feature preparation

Pure manifest operations (group-aware split, balanced batches, leave-one-out
plans, folder ingestion) plus the on-the-fly preprocessing that turns a
record into a co-occurrence tensor under a PreprocPolicy.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from controllers.checkpoint_store import save_features
from core.categories import REAL_CLASS
from core.cooccur import feature_tensor, pair_histogram
from core.errors import ConfigurationError, ManifestError
from core.imagecore import decode_image, jpeg_recompress, patch_origins
from core.models import CoocTensor, ManifestRecord, PairSubset, PreprocPolicy, Split, record_seed

logger = logging.getLogger(__name__)

DEFAULT_FRACTIONS = (0.90, 0.05, 0.05)
IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}
GROUP_SEPARATOR = "__"


# ============================================================================
# SPLITTING
# ============================================================================

def _groups(records: Sequence[ManifestRecord]) -> Dict[str, List[int]]:
    groups: Dict[str, List[int]] = {}
    for index, record in enumerate(records):
        groups.setdefault(record.group_id, []).append(index)
    return groups


def split_manifest(records: Sequence[ManifestRecord],
                   fractions: Tuple[float, float, float] = DEFAULT_FRACTIONS,
                   seed: int = 0) -> List[ManifestRecord]:
    """
    Assign train/val/test splits by group

    Groups are shuffled with the seed, then each group goes to the first split
    (train, val, test) that still has room for all of it; a group that fits
    nowhere goes to the split with the largest remaining shortfall. Record
    order is preserved.

    Args:
        records: Manifest records
        fractions: (train, val, test) fractions summing to 1
        seed: Shuffle seed

    Returns:
        New records with split assigned

    Raises:
        ManifestError: empty manifest
        ConfigurationError: fractions invalid
    """
    if not records:
        raise ManifestError("Cannot split an empty manifest")
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-6:
        raise ConfigurationError(f"Split fractions must be three non-negative values summing to 1, "
                                 f"got {fractions}")

    total = len(records)
    n_val = int(round(fractions[1] * total))
    n_test = int(round(fractions[2] * total))
    room = {Split.TRAIN: total - n_val - n_test, Split.VAL: n_val, Split.TEST: n_test}

    groups = _groups(records)
    order = sorted(groups)
    rng = np.random.default_rng(seed)
    rng.shuffle(order)

    assignment: Dict[str, Split] = {}
    for group_id in order:
        size = len(groups[group_id])
        target = next((s for s in room if room[s] >= size), None)
        if target is None:
            target = max(room, key=lambda s: room[s])
        room[target] -= size
        assignment[group_id] = target

    split_records = [replace(r, split=assignment[r.group_id].value) for r in records]
    counts = {s.value: sum(1 for r in split_records if r.split == s.value) for s in room}
    logger.info("Split %d records in %d groups: %s", total, len(groups), counts)
    return split_records


def records_in(records: Sequence[ManifestRecord], split: Union[Split, str]) -> List[ManifestRecord]:
    split = Split(split).value
    return [r for r in records if r.split == split]


def class_names(records: Sequence[ManifestRecord]) -> List[str]:
    """Labels present, 'real' first and the rest sorted"""
    labels = sorted({r.label for r in records})
    if REAL_CLASS in labels:
        labels.remove(REAL_CLASS)
        labels.insert(0, REAL_CLASS)
    return labels


# ============================================================================
# BATCHING
# ============================================================================

class _CyclingPool:
    """Draws indices without replacement, reshuffling when the pool runs dry"""

    def __init__(self, items: Sequence, rng: np.random.Generator):
        self.items = list(items)
        self.rng = rng
        self.order: List[int] = []

    def take(self, count: int) -> List:
        picked = []
        while len(picked) < count:
            if not self.order:
                self.order = list(self.rng.permutation(len(self.items)))
            picked.append(self.items[self.order.pop()])
        return picked


def balanced_batches(records: Sequence[ManifestRecord], per_class: int, seed: int = 0,
                     classes: Optional[Sequence[str]] = None) -> Iterator[List[ManifestRecord]]:
    """
    Endless iterator of class-balanced batches

    Every batch holds exactly per_class records of each class. Each class is
    sampled without replacement and reshuffled independently when exhausted.

    Args:
        records: Training records
        per_class: Records of each class per batch
        seed: Sampling seed
        classes: Class order (defaults to class_names(records))

    Raises:
        ManifestError: a class has fewer than per_class records
    """
    if per_class < 1:
        raise ConfigurationError(f"per_class must be >= 1, got {per_class}")
    classes = list(classes) if classes is not None else class_names(records)
    pools = []
    for k, name in enumerate(classes):
        members = [r for r in records if r.label == name]
        if len(members) < per_class:
            raise ManifestError(
                f"Class '{name}' has {len(members)} records; balanced batches need {per_class}"
            )
        pools.append(_CyclingPool(members, np.random.default_rng([seed, k])))

    mixer = np.random.default_rng([seed, len(classes)])
    while True:
        batch = [r for pool in pools for r in pool.take(per_class)]
        yield [batch[i] for i in mixer.permutation(len(batch))]


def shuffled_batches(records: Sequence[ManifestRecord], batch_size: int,
                     seed: int = 0) -> Iterator[List[ManifestRecord]]:
    """Endless iterator of batches drawn without replacement, reshuffled per pass"""
    if not records:
        raise ManifestError("No records to batch")
    if batch_size < 1:
        raise ConfigurationError(f"batch_size must be >= 1, got {batch_size}")
    pool = _CyclingPool(records, np.random.default_rng(seed))
    while True:
        yield pool.take(batch_size)


# ============================================================================
# LEAVE-ONE-OUT
# ============================================================================

@dataclass
class HoldoutPlan:
    """Train/val records without one generator family, test = that family plus real"""
    held_out: str
    train: List[ManifestRecord]
    val: List[ManifestRecord]
    test: List[ManifestRecord]

    @property
    def train_classes(self) -> List[str]:
        return class_names(self.train)


def leave_one_out_plan(records: Sequence[ManifestRecord], held_out_class: str,
                       seed: int = 0) -> HoldoutPlan:
    """
    Build a leave-one-generator-out plan

    Every record of the held-out class goes to test, together with as many
    real records as there are held-out ones, drawn from the test split.

    Raises:
        ManifestError: unknown class, or training would be left with one class
        ConfigurationError: the real class was named as the held-out class
    """
    labels = set(r.label for r in records)
    if held_out_class not in labels:
        raise ManifestError(f"Unknown class '{held_out_class}'; manifest has {sorted(labels)}")
    if held_out_class == REAL_CLASS:
        raise ConfigurationError("Only a generator class can be held out")

    train = [r for r in records_in(records, Split.TRAIN) if r.label != held_out_class]
    val = [r for r in records_in(records, Split.VAL) if r.label != held_out_class]
    if len({r.label for r in train}) < 2:
        raise ManifestError(
            f"Holding out '{held_out_class}' leaves a single training class"
        )

    held = [r for r in records if r.label == held_out_class]
    real_pool = [r for r in records_in(records, Split.TEST) if r.label == REAL_CLASS]
    picks = np.random.default_rng(seed).permutation(len(real_pool))[:len(held)]
    real_share = [real_pool[i] for i in sorted(picks)]
    if len(real_share) < len(held):
        logger.warning("Only %d real test records available for %d held-out records",
                       len(real_share), len(held))

    logger.info("Holdout %s: %d train, %d val, %d test (%d real)",
                held_out_class, len(train), len(val), len(held) + len(real_share), len(real_share))
    return HoldoutPlan(held_out_class, train, val, held + real_share)


# ============================================================================
# INGESTION
# ============================================================================

def group_id_for(path: Path) -> str:
    """File stem up to the first '__' (derivatives of one source share it)"""
    return path.stem.split(GROUP_SEPARATOR, 1)[0] or path.stem


def ingest_folder(root: Union[str, Path]) -> List[ManifestRecord]:
    """
    Build a manifest from root/<class>/<image> files

    Raises:
        ManifestError: no images found
    """
    root = Path(root)
    records = []
    for class_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        for image in sorted(class_dir.iterdir()):
            if image.suffix.lower() in IMAGE_SUFFIXES and image.is_file():
                records.append(ManifestRecord(path=str(image), label=class_dir.name,
                                              group_id=group_id_for(image)))
    if not records:
        raise ManifestError(f"No PNG or JPEG images under {root}/<class>/")
    logger.info("Ingested %d images in %d classes from %s",
                len(records), len(class_names(records)), root)
    return records


# ============================================================================
# FEATURES
# ============================================================================

def prepare_features(record: ManifestRecord, policy: PreprocPolicy) -> CoocTensor:
    """
    Decode, recompress and crop one record, then compute its co-occurrence tensor

    The JPEG quality and patch origin are deterministic per (policy seed, path).
    Images smaller than the patch are used whole.
    """
    img = decode_image(record.path)
    img = jpeg_recompress(img, policy.quality_for(record.path))
    size = policy.patch.size if policy.patch is not None else None
    if size is not None and img.width >= size and img.height >= size:
        origins = patch_origins(img.width, img.height, policy.patch)
        rng = np.random.default_rng(record_seed(policy.rng_seed, record.path, "patch"))
        row, col = origins[int(rng.integers(len(origins)))]
        img = img.crop(row, col, size, size)
    return feature_tensor(img, policy.subset)


def prepare_batch(records: Sequence[ManifestRecord], policy: PreprocPolicy,
                  threads: int = 1) -> np.ndarray:
    """(N, 256, 256, D) float32 features; order follows records regardless of threads"""
    if threads <= 1 or len(records) <= 1:
        tensors = [prepare_features(r, policy).values for r in records]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            tensors = [t.values for t in pool.map(lambda r: prepare_features(r, policy), records)]
    return np.stack(tensors, axis=0)


def dump_features(records: Sequence[ManifestRecord], policy: PreprocPolicy,
                  path: Union[str, Path], threads: int = 1, chunk: int = 64) -> Path:
    """Compute features for every record and write a feature container"""
    parts = []
    for start in tqdm(range(0, len(records), chunk), desc="Extracting features", unit="batch"):
        parts.append(prepare_batch(records[start:start + chunk], policy, threads))
    return save_features(path, np.concatenate(parts, axis=0), list(records), policy)


# ============================================================================
# SEPARABILITY ORACLE
# ============================================================================

def raw_diagonal_mass(record: ManifestRecord, subset: PairSubset) -> float:
    """Share of equal-value pairs over every channel and direction of an image"""
    img = decode_image(record.path)
    trace = 0.0
    total = 0.0
    for c in range(img.channels):
        channel = img.channel(c)
        for direction in subset.directions:
            counts = pair_histogram(channel, direction)
            trace += float(np.trace(counts))
            total += float(counts.sum())
    return trace / total if total else 0.0


@dataclass
class OracleResult:
    """Threshold stump on diagonal mass"""
    threshold: float
    above_label: str
    below_label: str
    train_accuracy: float
    test_accuracy: float

    def to_dict(self):
        return dict(self.__dict__)


def fit_stump(values: np.ndarray, labels: Sequence[str]) -> Tuple[float, str, str, float]:
    """Best single threshold (and polarity) separating two labels on one scalar"""
    names = sorted(set(labels))
    if len(names) != 2:
        raise ConfigurationError(f"A threshold stump separates exactly two classes, got {names}")
    order = np.argsort(values, kind="stable")
    sorted_values = np.asarray(values, dtype=np.float64)[order]
    is_first = np.array([labels[i] == names[0] for i in order])

    n = len(sorted_values)
    # below[k]: count of names[0] among the k smallest values
    below = np.concatenate([[0], np.cumsum(is_first)])
    total_first = int(is_first.sum())
    best = (-1.0, 0.0, names[0], names[1])
    for k in range(n + 1):
        # names[0] below threshold, names[1] above
        hits = below[k] + ((n - k) - (total_first - below[k]))
        for acc, low, high in ((hits / n, names[0], names[1]), ((n - hits) / n, names[1], names[0])):
            if acc > best[0]:
                if k == 0:
                    threshold = sorted_values[0] - 1.0
                elif k == n:
                    threshold = sorted_values[-1] + 1.0
                else:
                    threshold = 0.5 * (sorted_values[k - 1] + sorted_values[k])
                best = (acc, threshold, low, high)
    accuracy, threshold, low, high = best
    return threshold, high, low, accuracy


def separability_oracle(records: Sequence[ManifestRecord], subset: PairSubset) -> OracleResult:
    """
    Fit a diagonal-mass threshold on train records and score it on test records

    Falls back to scoring on the fit set when no test split exists.
    """
    fit = records_in(records, Split.TRAIN) or list(records)
    held = records_in(records, Split.TEST) or fit
    fit_values = np.array([raw_diagonal_mass(r, subset) for r in fit])
    threshold, above, below, train_acc = fit_stump(fit_values, [r.label for r in fit])

    held_values = np.array([raw_diagonal_mass(r, subset) for r in held])
    predicted = np.where(held_values > threshold, above, below)
    test_acc = float(np.mean([p == r.label for p, r in zip(predicted, held)]))
    logger.info("Diagonal-mass oracle: threshold %.5f, train %.4f, test %.4f",
                threshold, train_acc, test_acc)
    return OracleResult(float(threshold), above, below, float(train_acc), test_acc)
