"""Engine configuration: nested sections loaded from TOML or JSON.

Example ``engine.toml``::

    [segmenter]
    window_length = 8192   # context window L
    stride = 7680          # step S; overlap is L - S

    [router]
    tau = 8                # activation budget

    [backend]
    kind = "oracle"        # oracle | scripted | remote

Unknown sections or keys are rejected, and numeric bounds are checked on load.
Relative paths inside a file resolve against the file's directory.
"""

from __future__ import annotations

import dataclasses
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from epimem.router import PATHWAYS, RouterConfig, RouterConfigError
from epimem.segmenter import SegmenterConfig, SegmenterConfigError

BACKEND_KINDS = ("oracle", "scripted", "remote")
EMBEDDER_KINDS = ("hashing", "remote")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SegmenterSection:
    # 8K-token contexts stepping by 7.5K leave a 512-token overlap
    window_length: int = 8192
    stride: int = 7680
    respect_turns: bool = True

    def build(self) -> SegmenterConfig:
        return SegmenterConfig(self.window_length, self.stride, self.respect_turns)


@dataclass(frozen=True)
class RouterSection:
    tau: int = 8
    k_global: int | None = None
    k_vec: int | None = None
    k_kw: int | None = None
    alpha: float = 0.5
    k1: float = 1.2
    b: float = 0.75
    pathways: tuple[str, ...] = PATHWAYS

    def build(self) -> RouterConfig:
        return RouterConfig(
            tau=self.tau, k_global=self.k_global, k_vec=self.k_vec, k_kw=self.k_kw,
            alpha=self.alpha, k1=self.k1, b=self.b, pathways=tuple(self.pathways),
        )


@dataclass(frozen=True)
class AgentsSection:
    max_iterations: int = 3
    parallelism: int = 8


@dataclass(frozen=True)
class IndexerSection:
    summary_cap: int = 512
    embedder: str = "hashing"
    embedding_dimension: int = 256
    embedding_model: str = ""


@dataclass(frozen=True)
class BackendSection:
    kind: str = "oracle"
    script: str = ""
    small_model: str = ""
    large_model: str = ""
    base_url: str = ""
    cache_enabled: bool = True
    cache_capacity: int = 256
    cost_ratio: int = 10


@dataclass(frozen=True)
class PathsSection:
    archive: str = "archive"


@dataclass(frozen=True)
class EngineConfig:
    segmenter: SegmenterSection = field(default_factory=SegmenterSection)
    router: RouterSection = field(default_factory=RouterSection)
    agents: AgentsSection = field(default_factory=AgentsSection)
    indexer: IndexerSection = field(default_factory=IndexerSection)
    backend: BackendSection = field(default_factory=BackendSection)
    paths: PathsSection = field(default_factory=PathsSection)

    def __post_init__(self) -> None:
        validate(self)

    def to_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        out["router"]["pathways"] = list(self.router.pathways)
        return out

    def replace(self, section: str, **changes: Any) -> "EngineConfig":
        updated = dataclasses.replace(getattr(self, section), **changes)
        return dataclasses.replace(self, **{section: updated})

    @classmethod
    def from_dict(cls, data: dict[str, Any], base_dir: Path | None = None) -> "EngineConfig":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a table/object")
        sections = {f.name: f for f in dataclasses.fields(cls)}
        unknown = set(data) - set(sections)
        if unknown:
            raise ConfigError(f"unknown config section(s): {sorted(unknown)}")
        built = {}
        for name, f in sections.items():
            raw = data.get(name, {})
            if not isinstance(raw, dict):
                raise ConfigError(f"[{name}] must be a table")
            section_cls = f.default_factory  # type: ignore[misc]
            known = {sf.name: sf for sf in dataclasses.fields(section_cls)}
            bad = set(raw) - set(known)
            if bad:
                raise ConfigError(f"unknown key(s) in [{name}]: {sorted(bad)}")
            values = {}
            for key, value in raw.items():
                default = getattr(section_cls(), key)
                values[key] = _coerce(f"{name}.{key}", value, default)
            if name == "backend" and values.get("script") and base_dir is not None:
                values["script"] = str((base_dir / values["script"]).resolve())
            built[name] = section_cls(**values)
        return cls(**built)


def _coerce(where: str, value: Any, default: Any) -> Any:
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be a boolean")
        return value
    if isinstance(default, int) or (default is None and where.split(".")[1].startswith("k_")):
        if value is None and default is None:
            return None
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number")
        return float(value)
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)) or not all(isinstance(v, str) for v in value):
            raise ConfigError(f"{where} must be a list of strings")
        return tuple(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string")
        return value
    return value


def validate(cfg: EngineConfig) -> None:
    try:
        cfg.segmenter.build()
        cfg.router.build()
    except (SegmenterConfigError, RouterConfigError) as exc:
        raise ConfigError(str(exc)) from None
    if cfg.segmenter.window_length < 1:
        raise ConfigError("segmenter.window_length must be >= 1")
    if cfg.agents.max_iterations < 1:
        raise ConfigError("agents.max_iterations must be >= 1")
    if cfg.agents.parallelism < 1:
        raise ConfigError("agents.parallelism must be >= 1")
    if cfg.indexer.summary_cap < 1:
        raise ConfigError("indexer.summary_cap must be >= 1")
    if cfg.indexer.embedder not in EMBEDDER_KINDS:
        raise ConfigError(f"indexer.embedder must be one of {EMBEDDER_KINDS}")
    if cfg.indexer.embedding_dimension < 1:
        raise ConfigError("indexer.embedding_dimension must be >= 1")
    if cfg.backend.kind not in BACKEND_KINDS:
        raise ConfigError(f"backend.kind must be one of {BACKEND_KINDS}")
    if cfg.backend.kind == "scripted" and not cfg.backend.script:
        raise ConfigError("backend.script is required when backend.kind = 'scripted'")
    if cfg.backend.cache_capacity < 1:
        raise ConfigError("backend.cache_capacity must be >= 1")
    if cfg.backend.cost_ratio < 1:
        raise ConfigError("backend.cost_ratio must be >= 1")


def load_config(path: str | Path | None = None) -> EngineConfig:
    """Read a ``.toml`` or ``.json`` file; ``None`` gives the defaults."""
    if path is None:
        return EngineConfig()
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(raw.decode("utf-8"))
        else:
            data = tomllib.loads(raw.decode("utf-8"))
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return EngineConfig.from_dict(data, base_dir=path.parent)
