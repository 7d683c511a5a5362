"""High-level engine: build memory from streams, then answer questions over it."""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from epimem.agents.orchestrator import Answer, Orchestrator
from epimem.archive import Archive, UnitConflictError
from epimem.backend.base import LanguageBackend, Role
from epimem.backend.cache import PrefixStateCache
from epimem.backend.mock import ExtractiveOracle, ScriptedBackend
from epimem.backend.remote import ENV_BASE_URL, ChatCompletionsBackend, RemoteEmbeddingProvider
from epimem.config import ConfigError, EngineConfig, load_config
from epimem.evalkit.datasets import DatasetError, load_dialogue_dataset, load_streaming_docs, read_objects
from epimem.indexer import EmbeddingProvider, HashingEmbedder, Indexer
from epimem.router import Router
from epimem.segmenter import TokenStream, read_records, segment_stream
from epimem.units import MemoryUnit, UnitState

logger = logging.getLogger(__name__)

CONFIG_SNAPSHOT = "engine.json"
MODES = ("direct", "iterative")


@dataclass(frozen=True)
class UnitStatus:
    unit_id: str
    status: str  # new | unchanged | superseded
    tokens: int
    state: str
    summary: str  # ok | degraded


@dataclass
class IngestReport:
    stream_id: str
    total_tokens: int = 0
    units: list[UnitStatus] = field(default_factory=list)

    @property
    def unchanged(self) -> bool:
        return bool(self.units) and all(u.status == "unchanged" for u in self.units)


def build_backends(cfg: EngineConfig) -> tuple[LanguageBackend, LanguageBackend]:
    b = cfg.backend
    if b.kind == "oracle":
        return ExtractiveOracle(Role.SMALL), ExtractiveOracle(Role.LARGE)
    if b.kind == "scripted":
        if not Path(b.script).is_file():
            raise ConfigError(f"backend script not found: {b.script}")
        return ScriptedBackend.from_file(b.script, Role.SMALL), ScriptedBackend.from_file(b.script, Role.LARGE)
    base_url = os.environ.get(ENV_BASE_URL) or b.base_url or None
    return (
        ChatCompletionsBackend(b.small_model or None, Role.SMALL, base_url=base_url, send_cache_key=b.cache_enabled),
        ChatCompletionsBackend(b.large_model or None, Role.LARGE, base_url=base_url),
    )


def build_embedder(cfg: EngineConfig) -> EmbeddingProvider:
    if cfg.indexer.embedder == "remote":
        base_url = os.environ.get(ENV_BASE_URL) or cfg.backend.base_url or None
        return RemoteEmbeddingProvider(cfg.indexer.embedding_model or None, base_url=base_url)
    return HashingEmbedder(cfg.indexer.embedding_dimension)


def _check_compatible(saved: EngineConfig, cfg: EngineConfig) -> None:
    for section in ("segmenter", "indexer"):
        if getattr(saved, section) != getattr(cfg, section):
            raise ConfigError(
                f"[{section}] differs from the configuration this archive was built with; "
                "use the original settings or a fresh archive"
            )


class MemoryEngine:
    """Owns the archive, backends, router and orchestrator for one configuration."""

    def __init__(
        self,
        config: EngineConfig | None = None,
        *,
        archive: Archive | None = None,
        small: LanguageBackend | None = None,
        large: LanguageBackend | None = None,
        embedder: EmbeddingProvider | None = None,
    ) -> None:
        self.config = config or EngineConfig()
        self.archive = archive if archive is not None else Archive(None)
        if small is None or large is None:
            default_small, default_large = build_backends(self.config)
            small = small or default_small
            large = large or default_large
        self.small = small
        self.large = large
        self.embedder = embedder or build_embedder(self.config)
        self.cache = (
            PrefixStateCache(self.config.backend.cache_capacity) if self.config.backend.cache_enabled else None
        )
        self.indexer = Indexer(self.small, self.embedder, self.config.indexer.summary_cap, self.cache)
        self.router = Router(self.embedder, self.config.router.build())
        self.orchestrator = Orchestrator(
            self.archive,
            self.router,
            self.small,
            self.large,
            cache=self.cache,
            parallelism=self.config.agents.parallelism,
            max_iterations=self.config.agents.max_iterations,
            cost_ratio=self.config.backend.cost_ratio,
        )

    @classmethod
    def open(cls, archive_dir: str | Path, config: EngineConfig | None = None, **kwargs) -> "MemoryEngine":
        """Open an on-disk archive.

        Without ``config`` the snapshot saved at first ingest is reused.  A
        supplied config must agree with it on segmentation and indexing.
        """
        archive_dir = Path(archive_dir)
        snap_path = archive_dir / CONFIG_SNAPSHOT
        saved = load_config(snap_path) if snap_path.is_file() else None
        if config is None:
            config = saved or EngineConfig()
        elif saved is not None:
            _check_compatible(saved, config)
        engine = cls(config, archive=Archive(archive_dir), **kwargs)
        if saved is None:
            snap_path.write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return engine

    def close(self) -> None:
        self.archive.close()

    def __enter__(self) -> "MemoryEngine":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- phase 1: building memory -----------------------------------------

    def ingest(self, stream_id: str, stream: TokenStream) -> IngestReport:
        """Segment, index and store one stream; re-ingesting the same input is a no-op."""
        if ":" in stream_id:
            raise ValueError("stream ids may not contain ':'")
        contexts = segment_stream(stream, self.config.segmenter.build())
        report = IngestReport(stream_id, total_tokens=len(stream))
        plan: list[tuple[MemoryUnit, str]] = []
        for ctx in contexts:
            unit = MemoryUnit.from_context(stream_id, ctx)
            if unit.unit_id in self.archive:
                old = self.archive.load(unit.unit_id)
                if old.same_content(unit):
                    plan.append((old, "unchanged"))
                    continue
                if old.state is not UnitState.ACTIVE_TAIL:
                    raise UnitConflictError(
                        f"unit {unit.unit_id} is archived with different content; "
                        "ingest changed input under a new stream id"
                    )
                plan.append((unit, "superseded"))
            else:
                plan.append((unit, "new"))

        def index(item: tuple[MemoryUnit, str]) -> MemoryUnit:
            unit, _ = item
            return unit if unit.indexed else self.indexer.index(unit)

        with ThreadPoolExecutor(max_workers=self.config.agents.parallelism) as pool:
            indexed = list(pool.map(index, plan))
        for (orig, status), unit in zip(plan, indexed):
            if status == "unchanged":
                if unit is not orig:
                    unit = self.archive.attach(
                        unit.unit_id,
                        summary=unit.summary if orig.summary is None else None,
                        context_embedding=unit.context_embedding if orig.context_embedding is None else None,
                        summary_embedding=unit.summary_embedding if orig.summary_embedding is None else None,
                    )
            else:
                self.archive.store(unit)
            report.units.append(
                UnitStatus(
                    unit_id=unit.unit_id,
                    status=status,
                    tokens=unit.end - unit.start + 1 if unit.text else 0,
                    state=unit.state.value,
                    summary="degraded" if unit.summary and unit.summary.degraded else "ok",
                )
            )
        return report

    def ingest_path(self, path: str | Path, stream_id: str | None = None) -> list[IngestReport]:
        """Ingest a dialogue dataset, a document dataset, or a plain record file."""
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"input not found: {path}")
        return [self.ingest(sid, stream) for sid, stream in load_input(path, stream_id).items()]

    # -- phases 2-4: answering ---------------------------------------------

    def ask(
        self,
        question: str,
        *,
        mode: str = "direct",
        stream_id: str | None = None,
        tau: int | None = None,
        max_iterations: int | None = None,
        disabled: Sequence[str] = (),
    ) -> Answer:
        if mode == "direct":
            return self.orchestrator.answer_direct(question, tau=tau, stream_id=stream_id, disabled=disabled)
        if mode == "iterative":
            return self.orchestrator.answer_iterative(
                question, max_iterations=max_iterations, tau=tau, stream_id=stream_id
            )
        raise ValueError(f"mode must be one of {MODES}")


def load_input(path: Path, stream_id: str | None = None) -> dict[str, TokenStream]:
    """Map stream id -> token stream for any supported ingest file."""
    if path.suffix.lower() in (".json", ".jsonl"):
        try:
            objects = read_objects(path)
        except DatasetError:
            # record files may mix JSON lines with plain-text lines
            objects = []
        if objects and "sessions" in objects[0]:
            streams = load_dialogue_dataset(path).streams
            if stream_id is not None:
                if len(streams) != 1:
                    raise ValueError("--stream only applies to single-conversation files")
                return {stream_id: next(iter(streams.values()))}
            return streams
        if objects and "docs" in objects[0]:
            n_docs = sum(len(o.get("docs", [])) for o in objects)
            return load_streaming_docs(path, n_docs, stream_id or "docs").streams
    records = read_records(path)
    return {stream_id or path.stem.replace(":", "_"): TokenStream.from_records(records)}
