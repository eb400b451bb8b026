"""
Utils - Utility scripts and helper functions

Contains the composite image generator used for localization checks.
"""
