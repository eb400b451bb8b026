#!/usr/bin/env python3
"""
Training Service - Capped-epoch training, evaluation and robustness sweeps

Training draws batches from the train split, takes one Adam step per batch,
scores the validation split after every epoch and keeps the parameters of the
best validation epoch. Evaluation thresholds detection at probability 0.5 and
attributes by argmax (lowest class index wins ties).
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Iterator, List, Optional, Sequence, Union

import numpy as np
from tqdm import tqdm

from core.categories import DETECTION_CLASSES, jpeg_tag, validate_class_names
from core.errors import ConfigurationError, ManifestError, TrainingDivergedError
from core.models import (
    ArchConfig, ConfusionMatrix, EvalReport, HeadKind, ManifestRecord, ModelCheckpoint,
    PatchSpec, PreprocPolicy, Split,
)
from core.network import MiniXception, build
from core.nn import AdamConfig, adam_step
from managers.history_manager import MetricHistory
from services.dataset_service import (
    balanced_batches, class_names, prepare_batch, records_in, shuffled_batches,
)

logger = logging.getLogger(__name__)

DETECTION_THRESHOLD = 0.5


# ============================================================================
# CONFIGURATION
# ============================================================================

@dataclass
class TrainConfig:
    """Epoch caps, batch composition and optimizer settings"""
    epochs: int = 20
    batches_per_epoch: int = 100
    val_batches: int = 50
    test_batches_cap: int = 2000
    batch_size: int = 64
    per_class: Optional[int] = None
    adam: AdamConfig = field(default_factory=AdamConfig)
    seed: int = 0
    threads: int = 1
    cache_features: bool = False
    show_progress: bool = True

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigurationError(f"epochs must be >= 0, got {self.epochs}")
        for name in ("batches_per_epoch", "val_batches", "test_batches_cap", "batch_size", "threads"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}")
        if self.per_class is not None and self.per_class < 1:
            raise ConfigurationError(f"per_class must be positive, got {self.per_class}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "epochs": self.epochs,
            "batches_per_epoch": self.batches_per_epoch,
            "val_batches": self.val_batches,
            "test_batches_cap": self.test_batches_cap,
            "batch_size": self.batch_size,
            "per_class": self.per_class,
            "adam": self.adam.to_dict(),
            "seed": self.seed,
            "threads": self.threads,
        }


class _Features:
    """Feature provider with an optional per-path cache"""

    def __init__(self, policy: PreprocPolicy, threads: int, cache: bool):
        self.policy = policy
        self.threads = threads
        self.cache: Optional[Dict[str, np.ndarray]] = {} if cache else None

    def __call__(self, records: Sequence[ManifestRecord]) -> np.ndarray:
        if self.cache is None:
            return prepare_batch(records, self.policy, self.threads)
        missing = list({r.path: r for r in records if r.path not in self.cache}.values())
        if missing:
            for r, values in zip(missing, prepare_batch(missing, self.policy, self.threads)):
                self.cache[r.path] = values
        return np.stack([self.cache[r.path] for r in records])


# ============================================================================
# LABELS AND PREDICTIONS
# ============================================================================

def head_classes(arch: ArchConfig, records: Sequence[ManifestRecord],
                 classes: Optional[Sequence[str]] = None) -> List[str]:
    """Ordered class list for a head (detection always ['real', 'gan'])"""
    if arch.head == HeadKind.DETECTION.value:
        return list(DETECTION_CLASSES)
    names = list(classes) if classes is not None else class_names(records)
    valid, error = validate_class_names(names)
    if not valid:
        raise ConfigurationError(error)
    if len(names) != arch.num_classes:
        raise ConfigurationError(
            f"Attribution head has {arch.num_classes} outputs but the data has classes {names}"
        )
    return names


def label_indices(ckpt: ModelCheckpoint, records: Sequence[ManifestRecord]) -> np.ndarray:
    """Head index of every record (non-real labels count as 'gan' for detection)"""
    return np.array([ckpt.class_index(r.label) for r in records], dtype=np.int64)


def decide(probabilities: np.ndarray, detection: bool) -> np.ndarray:
    """Predicted head index: 1 above the 0.5 threshold for detection, else argmax"""
    if detection:
        return (probabilities[:, 0] > DETECTION_THRESHOLD).astype(np.int64)
    return np.argmax(probabilities, axis=1).astype(np.int64)


def model_from_checkpoint(ckpt: ModelCheckpoint) -> MiniXception:
    model = MiniXception(ckpt.arch, seed=0)
    model.load_state_dict(ckpt.params)
    return model


def predict_records(model: MiniXception, records: Sequence[ManifestRecord], policy: PreprocPolicy,
                    batch_size: int = 64, threads: int = 1, show_progress: bool = False) -> np.ndarray:
    """Head probabilities for every record, in record order"""
    outputs = []
    starts = range(0, len(records), batch_size)
    for start in tqdm(starts, desc="Scoring", unit="batch", disable=not show_progress):
        features = prepare_batch(records[start:start + batch_size], policy, threads)
        outputs.append(model.predict(features))
    if not outputs:
        return np.zeros((0, model.config.output_dim))
    return np.concatenate(outputs, axis=0)


def equal_prior_accuracy(confusion_or_recalls: Union[ConfusionMatrix, Sequence[float]]) -> float:
    """
    Mean of the row-normalized confusion diagonal

    Accepts a confusion matrix (classes without records are skipped) or the
    per-class recalls directly.
    """
    if isinstance(confusion_or_recalls, ConfusionMatrix):
        rows = confusion_or_recalls.counts.sum(axis=1)
        recalls = confusion_or_recalls.recalls()[rows > 0]
    else:
        recalls = np.asarray(confusion_or_recalls, dtype=np.float64)
    if recalls.size == 0:
        return 0.0
    return float(np.mean(recalls))


# ============================================================================
# EVALUATION
# ============================================================================

def evaluate(ckpt: ModelCheckpoint, records: Sequence[ManifestRecord],
             policy: Optional[PreprocPolicy] = None, batch_size: int = 64,
             test_batches_cap: int = 2000, threads: int = 1, fingerprint: str = "",
             model: Optional[MiniXception] = None, show_progress: bool = False) -> EvalReport:
    """
    Evaluate a checkpoint on labeled records

    Processes the first min(len(records), test_batches_cap * batch_size) records.

    Args:
        ckpt: Checkpoint to evaluate
        records: Labeled records
        policy: Preprocessing (defaults to the checkpoint's own)
        batch_size: Records per forward pass
        test_batches_cap: Maximum number of batches
        threads: Feature workers
        fingerprint: Identifier stored in the report (defaults to the policy fingerprint)
        model: Prebuilt model for the checkpoint, to skip rebuilding

    Raises:
        ValueError: a record label is not one of the checkpoint's classes
        ManifestError: no records
    """
    if not records:
        raise ManifestError("No records to evaluate")
    policy = policy or ckpt.policy
    model = model or model_from_checkpoint(ckpt)
    records = list(records)[:test_batches_cap * batch_size]

    truth = label_indices(ckpt, records)
    probabilities = predict_records(model, records, policy, batch_size, threads, show_progress)
    predicted = decide(probabilities, ckpt.is_detection)

    if ckpt.is_detection:
        targets = truth.astype(np.float64)[:, None]
        p = np.clip(probabilities[:, 0], 1e-12, 1 - 1e-12)
        losses = -(targets[:, 0] * np.log(p) + (1 - targets[:, 0]) * np.log(1 - p))
        mean_gan_score = float(np.mean(probabilities[:, 0]))
    else:
        picked = probabilities[np.arange(len(truth)), truth]
        losses = -np.log(np.clip(picked, 1e-12, None))
        mean_gan_score = None

    confusion = ConfusionMatrix.from_predictions(ckpt.classes, truth, predicted)
    accuracy = float(np.trace(confusion.counts)) / confusion.total
    report = EvalReport(
        accuracy=accuracy,
        equal_prior_accuracy=equal_prior_accuracy(confusion),
        recalls=[float(v) for v in confusion.recalls()],
        confusion=confusion,
        fingerprint=fingerprint or policy.fingerprint(),
        mean_loss=float(np.mean(losses)),
        evaluated=len(records),
        mean_gan_score=mean_gan_score,
    )
    logger.info("Evaluated %d records: accuracy %.4f, equal-prior %.4f",
                report.evaluated, report.accuracy, report.equal_prior_accuracy)
    return report


# ============================================================================
# TRAINING
# ============================================================================

def _batches(train: List[ManifestRecord], classes: List[str], detection: bool,
             config: TrainConfig) -> Iterator[List[ManifestRecord]]:
    if detection:
        if config.per_class is not None:
            raise ConfigurationError("Class-balanced batches apply to attribution training")
        return shuffled_batches(train, config.batch_size, seed=config.seed)
    per_class = config.per_class or max(1, config.batch_size // len(classes))
    return balanced_batches(train, per_class, seed=config.seed, classes=classes)


def _accuracy(model: MiniXception, ckpt_like: ModelCheckpoint, records: List[ManifestRecord],
              features: _Features, batch_size: int, max_batches: int) -> float:
    records = records[:batch_size * max_batches]
    truth = label_indices(ckpt_like, records)
    hits = 0
    for start in range(0, len(records), batch_size):
        probabilities = model.predict(features(records[start:start + batch_size]))
        hits += int(np.sum(decide(probabilities, ckpt_like.is_detection)
                           == truth[start:start + batch_size]))
    return hits / len(records)


def _float32_state(model: MiniXception) -> Dict[str, np.ndarray]:
    return {name: w.astype(np.float32) for name, w in model.state_dict().items()}


def train(model: MiniXception, records: Sequence[ManifestRecord], policy: PreprocPolicy,
          config: TrainConfig, classes: Optional[Sequence[str]] = None) -> ModelCheckpoint:
    """
    Train a model and return the best-validation checkpoint

    Args:
        model: Freshly built model (mutated in place; ends holding the best parameters)
        records: Records with train/val splits assigned
        policy: Preprocessing applied to every record
        config: Epoch caps, batches and optimizer
        classes: Attribution class order (defaults to the labels present)

    Returns:
        Checkpoint with the best validation parameters and the metric history

    Raises:
        ManifestError: no training records
        TrainingDivergedError: loss became NaN or infinite
    """
    detection = model.config.head == HeadKind.DETECTION.value
    train_records = records_in(records, Split.TRAIN)
    val_records = records_in(records, Split.VAL)
    if not train_records:
        raise ManifestError("No records in the train split")
    names = head_classes(model.config, train_records, classes)

    history = MetricHistory()
    best_state = _float32_state(model)
    skeleton = ModelCheckpoint(model.config, names, policy, {})

    logger.info("Training %s head on %d records (%d val), %s",
                model.config.head, len(train_records), len(val_records), policy.describe())

    if config.epochs > 0:
        if not val_records:
            logger.warning("Validation split is empty; selecting checkpoints on training records")
            val_records = train_records
        features = _Features(policy, config.threads, config.cache_features)
        batches = _batches(train_records, names, detection, config)
        adam = replace(config.adam)

        epochs = tqdm(range(1, config.epochs + 1), desc="Training", unit="epoch",
                      disable=not config.show_progress)
        for epoch in epochs:
            losses = []
            for step in range(config.batches_per_epoch):
                batch = next(batches)
                targets = label_indices(skeleton, batch)
                model.zero_grad()
                logits = model.forward(features(batch))
                loss, dlogits = model.loss_and_grad(logits, targets)
                if not np.isfinite(loss):
                    raise TrainingDivergedError(
                        f"Loss became {loss} at epoch {epoch}, batch {step + 1} "
                        f"(lr={adam.lr}, batch size {len(batch)})"
                    )
                model.backward(dlogits)
                adam_step(model.params(), adam)
                losses.append(float(loss))

            val_acc = _accuracy(model, skeleton, val_records, features,
                                config.batch_size, config.val_batches)
            train_loss = float(np.mean(losses))
            if history.record(epoch, train_loss, val_acc):
                best_state = _float32_state(model)
            epochs.set_postfix(loss=f"{train_loss:.4f}", val_acc=f"{val_acc:.4f}")
            logger.info("Epoch %d: train_loss %.5f val_acc %.4f", epoch, train_loss, val_acc)

        model.load_state_dict(best_state)

    metadata = {
        "seed": config.seed,
        "epochs_run": len(history),
        "best_val_acc": history.best_val_acc,
        "best_epoch": history.best_epoch,
        "history": history.to_list(),
        "train_config": config.to_dict(),
    }
    return ModelCheckpoint(arch=model.config, classes=names, policy=policy,
                           params=best_state, metadata=metadata)


def history_of(ckpt: ModelCheckpoint) -> MetricHistory:
    return MetricHistory.from_list(ckpt.metadata.get("history", []))


# ============================================================================
# SWEEPS
# ============================================================================

SWEEP_AXES = ("patch", "jpeg")


def _axis_policy(base: PreprocPolicy, axis: str, value) -> PreprocPolicy:
    if axis == "patch":
        patch = None if value is None else PatchSpec(int(value), max(1, int(value) // 2))
        return base.with_changes(patch=patch)
    return base.with_changes(jpeg_qualities=[value])


def _axis_label(axis: str, value) -> str:
    if axis == "jpeg":
        return jpeg_tag(value)
    return "whole" if value is None else str(value)


@dataclass
class SweepResult:
    """Cross matrix of reports: rows = training value, columns = test value"""
    axis: str
    train_values: List[Any]
    test_values: List[Any]
    reports: List[List[EvalReport]]

    def accuracies(self) -> np.ndarray:
        return np.array([[r.accuracy for r in row] for row in self.reports])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "axis": self.axis,
            "train_values": [_axis_label(self.axis, v) for v in self.train_values],
            "test_values": [_axis_label(self.axis, v) for v in self.test_values],
            "accuracy": self.accuracies().tolist(),
            "reports": [[r.to_dict() for r in row] for row in self.reports],
        }

    def table(self) -> str:
        """Accuracy table with train values down and test values across"""
        width = 9
        corner = "train\\test"
        header = f"{corner:<{width}}" + "".join(
            f"{_axis_label(self.axis, v):>{width}}" for v in self.test_values)
        lines = [header]
        for value, row in zip(self.train_values, self.accuracies()):
            lines.append(f"{_axis_label(self.axis, value):<{width}}"
                         + "".join(f"{a:>{width}.4f}" for a in row))
        return "\n".join(lines)


def sweep_grid(axis: str, train_values: Sequence[Any], test_values: Sequence[Any],
               records: Sequence[ManifestRecord], arch: ArchConfig, base_policy: PreprocPolicy,
               config: TrainConfig) -> SweepResult:
    """
    Train one model per training value and evaluate it at every test value

    Args:
        axis: 'patch' (values are patch sizes, None = whole image) or
              'jpeg' (values are qualities, None = no compression)
        train_values: Values used for training
        test_values: Values used for testing
        records: Records with train/val/test splits
        arch: Architecture of every trained model
        base_policy: Policy whose other settings are kept
        config: Training configuration (same seed for every model)
    """
    if axis not in SWEEP_AXES:
        raise ConfigurationError(f"Unknown sweep axis: {axis}. Must be one of {SWEEP_AXES}")
    if not train_values or not test_values:
        raise ConfigurationError("Sweep axes must be nonempty")
    test_records = records_in(records, Split.TEST)
    if not test_records:
        raise ManifestError("No records in the test split")

    rows = []
    for value in train_values:
        logger.info("Sweep %s: training at %s", axis, _axis_label(axis, value))
        model = build(arch, seed=config.seed)
        ckpt = train(model, records, _axis_policy(base_policy, axis, value), config)
        rows.append([
            evaluate(ckpt, test_records, _axis_policy(base_policy, axis, test_value),
                     batch_size=config.batch_size, test_batches_cap=config.test_batches_cap,
                     threads=config.threads, model=model)
            for test_value in test_values
        ])
    return SweepResult(axis, list(train_values), list(test_values), rows)
