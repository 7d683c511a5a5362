"""Text embedding providers and the vector contract routing relies on."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from epimem.analyzer import STOPWORDS, analyze

DEFAULT_DIMENSION = 256


class EmbeddingError(ValueError):
    pass


class EmbeddingProvider(Protocol):
    name: str
    dimension: int | None

    def embed(self, text: str) -> list[float] | np.ndarray: ...


class HashingEmbedder:
    """Signed feature hashing of analyzed terms, sublinear tf, L2-normalized.

    Term ``t`` lands in bucket ``blake2b(t) mod d`` with the sign taken from
    the next hash bit, weighted ``1 + ln(tf)``.  Stopwords are skipped unless
    the text has nothing else.  Pure and deterministic.
    """

    def __init__(self, dimension: int = DEFAULT_DIMENSION, stopwords: frozenset[str] = STOPWORDS) -> None:
        if dimension < 1:
            raise ValueError("dimension must be positive")
        self.dimension = dimension
        self.stopwords = stopwords
        self.name = f"hashing-{dimension}"

    def _slot(self, term: str) -> tuple[int, float]:
        digest = int.from_bytes(hashlib.blake2b(term.encode("utf-8"), digest_size=8).digest(), "little")
        return digest % self.dimension, (1.0 if (digest >> 63) & 1 == 0 else -1.0)

    def embed(self, text: str) -> np.ndarray:
        terms = analyze(text)
        content = [t for t in terms if t not in self.stopwords]
        counts: dict[str, int] = {}
        for term in content or terms:
            counts[term] = counts.get(term, 0) + 1
        if not counts:
            raise EmbeddingError("text is empty after normalization")
        vec = np.zeros(self.dimension, dtype=np.float64)
        for term, tf in counts.items():
            slot, sign = self._slot(term)
            vec[slot] += sign * (1.0 + math.log(tf))
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            # every term cancelled out in colliding buckets
            slot, _ = self._slot(min(counts))
            vec[slot] = 1.0
            norm = 1.0
        return (vec / norm).astype(np.float32)


@dataclass(frozen=True)
class EmbeddingRecord:
    unit_id: str | None
    vector: np.ndarray
    source: str


def embed(text: str, provider: EmbeddingProvider, unit_id: str | None = None, source: str = "raw_context") -> EmbeddingRecord:
    vec = np.asarray(provider.embed(text), dtype=np.float32)
    if vec.ndim != 1 or vec.size == 0:
        raise EmbeddingError(f"provider returned shape {vec.shape}")
    if not np.all(np.isfinite(vec)):
        raise EmbeddingError("provider returned non-finite values")
    if provider.dimension is not None and vec.size != provider.dimension:
        raise EmbeddingError(f"expected dimension {provider.dimension}, got {vec.size}")
    return EmbeddingRecord(unit_id, vec, source)
