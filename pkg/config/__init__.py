"""
Config - Application configuration and constants

Contains environment settings and the shared color scheme.
"""

from config.color_scheme import COLORS
from config.settings import Settings, load_settings

__all__ = ["COLORS", "Settings", "load_settings"]
