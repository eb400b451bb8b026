"""
Managers - Stateful coordinators

Contains the training metric history.
"""

from managers.history_manager import EpochMetrics, MetricHistory

__all__ = ["EpochMetrics", "MetricHistory"]
