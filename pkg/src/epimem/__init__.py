"""Episodic-context memory engine for long-horizon agents."""

from epimem.config import EngineConfig, load_config
from epimem.engine import MemoryEngine

__all__ = ["EngineConfig", "MemoryEngine", "load_config"]
__version__ = "0.1.0"
