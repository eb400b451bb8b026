#!/usr/bin/env python3
"""
Settings - Environment-driven defaults
Reads .env.local and GANFOR_* variables; command-line flags override these
"""

import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional

from dotenv import load_dotenv

from core.errors import ConfigurationError

ENV_FILE = ".env.local"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


@dataclass
class Settings:
    """Process-wide defaults"""
    threads: int = 1
    log_level: str = "INFO"
    output_dir: Path = Path("output")

    def __post_init__(self):
        if self.threads < 1:
            raise ConfigurationError(f"GANFOR_THREADS must be >= 1, got {self.threads}")
        self.log_level = self.log_level.upper()
        if self.log_level not in LOG_LEVELS:
            raise ConfigurationError(f"Invalid log level: {self.log_level}. Must be one of {LOG_LEVELS}")
        self.output_dir = Path(self.output_dir)

    def to_dict(self) -> Dict[str, Any]:
        return {"threads": self.threads, "log_level": self.log_level,
                "output_dir": str(self.output_dir)}


def load_settings(env_file: Optional[str] = ENV_FILE) -> Settings:
    """
    Build Settings from the environment

    Args:
        env_file: dotenv file to load first (existing variables win)

    Returns:
        Settings instance
    """
    if env_file:
        load_dotenv(env_file)
    try:
        threads = int(os.getenv("GANFOR_THREADS", "1"))
    except ValueError:
        raise ConfigurationError(
            f"GANFOR_THREADS must be an integer, got {os.getenv('GANFOR_THREADS')!r}"
        ) from None
    return Settings(
        threads=threads,
        log_level=os.getenv("GANFOR_LOG_LEVEL", "INFO"),
        output_dir=Path(os.getenv("GANFOR_OUTPUT_DIR", "output")),
    )


def configure_logging(level: str) -> None:
    """Configure root logging once for command-line runs"""
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)-7s %(name)s: %(message)s",
    )
