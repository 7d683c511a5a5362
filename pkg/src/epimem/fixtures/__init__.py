"""Small bundled datasets, backend scripts and configs used by tests and demos."""

from __future__ import annotations

from importlib import resources
from pathlib import Path


def fixture_path(name: str, filename: str) -> Path:
    """Filesystem path of a bundled fixture file, e.g. ``("caroline", "config.toml")``."""
    path = Path(str(resources.files(__name__).joinpath(name, filename)))
    if not path.is_file():
        raise FileNotFoundError(f"no bundled fixture {name}/{filename}")
    return path
