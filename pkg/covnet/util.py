"""Utility of the covnet package."""
from pathlib import Path

DATADIR = Path(Path(__file__).parent, "data")
