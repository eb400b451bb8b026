"""
Controllers - File I/O for manifests, reports and binary containers

Contains the manifest/report file handler and the checkpoint store.
"""

from controllers.file_handler import FileHandler
from controllers.checkpoint_store import (
    fingerprint,
    load_checkpoint,
    load_features,
    save_checkpoint,
    save_features,
)

__all__ = [
    "FileHandler",
    "fingerprint",
    "load_checkpoint",
    "load_features",
    "save_checkpoint",
    "save_features",
]
