"""Versioning."""

major = 0
minor = 1
patch = 0
suffix = ".dev"

__version__ = f"{major}.{minor}.{patch}{suffix}"
