#!/usr/bin/env python3
"""
History Manager - Per-epoch training metrics
Records (epoch, train_loss, val_acc) rows and tracks the best validation epoch
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from controllers.file_handler import FileHandler

HISTORY_COLUMNS = ("epoch", "train_loss", "val_acc")


@dataclass
class EpochMetrics:
    """Metrics of one finished epoch"""
    epoch: int
    train_loss: float
    val_acc: float

    def to_dict(self) -> Dict[str, Any]:
        return {"epoch": self.epoch, "train_loss": self.train_loss, "val_acc": self.val_acc}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EpochMetrics":
        return cls(int(data["epoch"]), float(data["train_loss"]), float(data["val_acc"]))


class MetricHistory:
    """Manages the metric history of one training run"""
    def __init__(self, rows: Optional[List[EpochMetrics]] = None):
        self.rows: List[EpochMetrics] = list(rows or [])

    def record(self, epoch: int, train_loss: float, val_acc: float) -> bool:
        """
        Append an epoch row

        Returns:
            True if this epoch is a new strict best (ties keep the earlier epoch)
        """
        previous = self.best_val_acc
        self.rows.append(EpochMetrics(epoch, float(train_loss), float(val_acc)))
        return previous is None or val_acc > previous

    @property
    def best_val_acc(self) -> Optional[float]:
        if not self.rows:
            return None
        return max(r.val_acc for r in self.rows)

    @property
    def best_epoch(self) -> Optional[int]:
        """Earliest epoch reaching the best validation accuracy"""
        best = self.best_val_acc
        if best is None:
            return None
        return next(r.epoch for r in self.rows if r.val_acc == best)

    def __len__(self):
        return len(self.rows)

    def __eq__(self, other):
        return isinstance(other, MetricHistory) and self.rows == other.rows

    def to_list(self) -> List[Dict[str, Any]]:
        return [r.to_dict() for r in self.rows]

    @classmethod
    def from_list(cls, data: List[Dict[str, Any]]) -> "MetricHistory":
        return cls([EpochMetrics.from_dict(d) for d in data])

    def write_csv(self, filepath: Union[str, Path]) -> Path:
        return FileHandler.write_csv(
            filepath, HISTORY_COLUMNS,
            ([r.epoch, repr(r.train_loss), repr(r.val_acc)] for r in self.rows),
        )
