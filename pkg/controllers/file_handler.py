#!/usr/bin/env python3
"""
File Handler - JSON-lines manifests and JSON/CSV reports
Handles reading and writing corpus manifests, evaluation reports and tables
"""

import csv
import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

from core.errors import ManifestError
from core.models import ManifestRecord, Split

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

REQUIRED_RECORD_FIELDS = ("path", "label", "group_id")


class FileHandler:
    """
    Handles import/export of manifests and reports

    Provides:
    - Manifest import with per-line validation (tuple and raising variants)
    - Manifest export, one JSON object per line
    - JSON report and CSV table writers
    """

    @staticmethod
    def validate_record_data(data: Any) -> Tuple[bool, Optional[str]]:
        """
        Validate one decoded manifest line

        Args:
            data: Decoded JSON value

        Returns:
            Tuple of (is_valid, error_message)
        """
        if not isinstance(data, dict):
            return False, "Record is not a JSON object"

        for name in REQUIRED_RECORD_FIELDS:
            if name not in data:
                return False, f"Missing required field: '{name}'"
            if not isinstance(data[name], str) or not data[name]:
                return False, f"Field '{name}' must be a nonempty string"

        split = data.get("split", Split.UNASSIGNED.value)
        valid_splits = [s.value for s in Split]
        if split not in valid_splits:
            return False, f"Invalid split: {split}"

        return True, None

    @staticmethod
    def import_manifest(filepath: PathLike) -> Tuple[bool, Optional[List[ManifestRecord]], Optional[str]]:
        """
        Import a JSON-lines manifest

        Blank lines are skipped. Relative image paths are kept as written.

        Args:
            filepath: Path to the manifest

        Returns:
            Tuple of (success, records, error_message)
        """
        try:
            records = []
            with open(filepath, "r", encoding="utf-8") as f:
                for line_no, line in enumerate(f, start=1):
                    if not line.strip():
                        continue
                    data = json.loads(line)
                    valid, error = FileHandler.validate_record_data(data)
                    if not valid:
                        return False, None, f"Line {line_no}: {error}"
                    records.append(ManifestRecord.from_dict(data))

            if not records:
                return False, None, f"Manifest is empty: {filepath}"

            return True, records, None

        except json.JSONDecodeError as e:
            return False, None, f"Invalid JSON in manifest: {str(e)}"
        except FileNotFoundError:
            return False, None, f"File not found: {filepath}"
        except (OSError, UnicodeDecodeError, ValueError) as e:
            return False, None, f"Failed to import manifest: {str(e)}"

    @staticmethod
    def read_manifest(filepath: PathLike) -> List[ManifestRecord]:
        """Raising variant of import_manifest"""
        success, records, error = FileHandler.import_manifest(filepath)
        if not success:
            raise ManifestError(error)
        return records

    @staticmethod
    def write_manifest(filepath: PathLike, records: Iterable[ManifestRecord]) -> Path:
        """
        Write records as one JSON object per line

        Args:
            filepath: Destination manifest
            records: Records to write, in order

        Returns:
            Path written
        """
        path = Path(filepath)
        lines = [json.dumps(r.to_dict(), sort_keys=True) for r in records]
        _atomic_write_text(path, "".join(line + "\n" for line in lines))
        logger.info("Wrote %d records to %s", len(lines), path)
        return path

    @staticmethod
    def export_json(filepath: PathLike, data: Dict[str, Any]) -> Tuple[bool, Optional[str]]:
        """
        Export a report dictionary as pretty-printed JSON

        Returns:
            Tuple of (success, error_message)
        """
        try:
            _atomic_write_text(Path(filepath), json.dumps(data, indent=2, sort_keys=True) + "\n")
            return True, None
        except (OSError, TypeError, ValueError) as e:
            return False, f"Failed to export: {str(e)}"

    @staticmethod
    def write_json(filepath: PathLike, data: Dict[str, Any]) -> Path:
        """Raising variant of export_json"""
        success, error = FileHandler.export_json(filepath, data)
        if not success:
            raise OSError(error)
        return Path(filepath)

    @staticmethod
    def write_csv(filepath: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        """Write a CSV table with a header row"""
        path = Path(filepath)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(list(header))
            for row in rows:
                writer.writerow(list(row))
        return path

    @staticmethod
    def write_jsonl(filepath: PathLike, rows: Iterable[Dict[str, Any]]) -> Path:
        """Write dictionaries as JSON lines"""
        path = Path(filepath)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            for row in rows:
                f.write(json.dumps(row, sort_keys=True) + "\n")
        return path


def _atomic_write_text(path: Path, text: str) -> None:
    """Write via a temp file in the same directory and rename over the target"""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, temp_path = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(temp_path, path)
    except BaseException:
        Path(temp_path).unlink(missing_ok=True)
        raise
