"""Data factory and evaluation harness for task-planning datasets."""

from pathlib import Path

__version__ = "0.1.0"


def assets_dir() -> Path:
    """Directory holding the bundled domains, generation configs and schemas."""
    return Path(__file__).resolve().parent / "assets"
