"""Routing representations for stored contexts: summary, embeddings, term stats."""

from __future__ import annotations

import logging

import numpy as np

from epimem import prompts
from epimem.agents.parsing import parse_summary
from epimem.analyzer import DEFAULT_TOKENIZER, analyze
from epimem.backend.base import CompletionRequest, LanguageBackend
from epimem.backend.cache import PrefixStateCache, fingerprint
from epimem.embedding import (
    DEFAULT_DIMENSION,
    EmbeddingError,
    EmbeddingProvider,
    EmbeddingRecord,
    HashingEmbedder,
    embed,
)
from epimem.units import LexicalStats, MemoryUnit, SummaryRecord

__all__ = [
    "DEFAULT_DIMENSION",
    "DEFAULT_SUMMARY_CAP",
    "EmbeddingError",
    "EmbeddingProvider",
    "EmbeddingRecord",
    "HashingEmbedder",
    "Indexer",
    "build_lexical_stats",
    "embed",
    "summarize",
]

logger = logging.getLogger(__name__)

DEFAULT_SUMMARY_CAP = 512


def build_lexical_stats(text: str) -> LexicalStats:
    return LexicalStats.from_terms(analyze(text))


def truncate_words(text: str, cap: int) -> str:
    words = DEFAULT_TOKENIZER.tokenize(text)
    if len(words) <= cap:
        return text.strip()
    return DEFAULT_TOKENIZER.detokenize(words[:cap])


def compose_summary_text(main_events: str, speakers, time_period: str, key_items) -> str:
    parts = []
    if main_events:
        parts.append(main_events)
    if speakers:
        parts.append("Speakers: " + ", ".join(speakers) + ".")
    if time_period:
        parts.append("Time: " + time_period + ".")
    if key_items:
        parts.append("Key items: " + ", ".join(key_items) + ".")
    return " ".join(parts)


def summary_request(unit: MemoryUnit, model: str = "") -> CompletionRequest:
    return CompletionRequest(
        system=prompts.memory_system_prompt(unit.text),
        user=prompts.summary_user_prompt(),
        model=model,
        metadata={"task": "summarize", "unit_id": unit.unit_id, "context": unit.text},
    )


def summarize(
    unit: MemoryUnit,
    backend: LanguageBackend,
    cap: int = DEFAULT_SUMMARY_CAP,
    cache: PrefixStateCache | None = None,
) -> SummaryRecord:
    request = summary_request(unit)
    if cache is not None:
        key = fingerprint(unit.text, prompts.MEMORY_AGENT_PROMPT)
        handle = cache.lookup_or_insert(key, lambda: backend.prefix_handle(key))
        request = CompletionRequest(
            request.system, request.user, request.model, request.max_tokens,
            request.temperature, request.metadata, handle,
        )
    raw = backend.complete(request).text
    parsed = parse_summary(raw)
    if parsed.ok:
        text = compose_summary_text(parsed.main_events, parsed.speakers, parsed.time_period, parsed.key_items)
        if text:
            return SummaryRecord(
                unit.unit_id,
                truncate_words(text, cap),
                speakers=parsed.speakers,
                time_period=parsed.time_period,
                key_items=parsed.key_items,
                main_events=parsed.main_events,
            )
    fallback = raw.strip() or unit.text
    logger.warning("summary for %s degraded (%s)", unit.unit_id, "; ".join(parsed.errors) or "empty")
    return SummaryRecord(unit.unit_id, truncate_words(fallback, cap), degraded=True)


class Indexer:
    """Fills in whatever routing representations a unit is missing."""

    def __init__(
        self,
        backend: LanguageBackend,
        embedder: EmbeddingProvider,
        summary_cap: int = DEFAULT_SUMMARY_CAP,
        cache: PrefixStateCache | None = None,
    ) -> None:
        self.backend = backend
        self.embedder = embedder
        self.summary_cap = summary_cap
        self.cache = cache

    def _vector(self, text: str) -> np.ndarray:
        try:
            return embed(text, self.embedder).vector
        except EmbeddingError:
            if self.embedder.dimension is None:
                raise
            # empty context: zero vector, cosine 0 against everything
            return np.zeros(self.embedder.dimension, dtype=np.float32)

    def index(self, unit: MemoryUnit) -> MemoryUnit:
        fields = {}
        if unit.lexical is None:
            fields["lexical"] = build_lexical_stats(unit.text)
        summary = unit.summary
        if summary is None:
            summary = summarize(unit, self.backend, self.summary_cap, self.cache)
            fields["summary"] = summary
        if unit.context_embedding is None:
            fields["context_embedding"] = self._vector(unit.text)
        if unit.summary_embedding is None:
            fields["summary_embedding"] = self._vector(summary.summary_text)
        return unit.with_index(**fields) if fields else unit
