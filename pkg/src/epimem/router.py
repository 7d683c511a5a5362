"""Three-pathway activation routing over a read-only archive snapshot.

Pathways, each scoring every unit:

global
    ``alpha * cos(query, summary embedding) + (1 - alpha) * bm25_summary / max(bm25_summary)``
    where BM25 runs over the summary texts.
vec
    cosine between the query embedding and each raw-context embedding.
kw
    Okapi BM25 over the raw-context term statistics::

        idf(t)   = ln((N - df(t) + 0.5) / (df(t) + 0.5) + 1)
        score(d) = sum over query terms t (repeats counted) of
                   idf(t) * tf(t, d) * (k1 + 1) / (tf(t, d) + k1 * (1 - b + b * |d| / avgdl))

    Units scoring exactly 0 are never returned by this pathway.

Each pathway contributes its top ``k`` (default ``tau``); the activation set
is the union.  Per-pathway scores are min-max normalized over all units and
the fused score is their maximum; the union is cut to ``tau`` entries by
fused score, ties going to the later unit (stream, then segment index).

Cost: every pathway is an exact scan, O(N * d) for the dense pathways and
O(|q| * N) for BM25.  Nothing is cached between queries.
"""

from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from epimem.analyzer import analyze
from epimem.archive import ArchiveSnapshot
from epimem.embedding import EmbeddingError, EmbeddingProvider
from epimem.units import LexicalStats

PATHWAYS = ("global", "vec", "kw")


class RouterConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RouterConfig:
    tau: int = 8
    k_global: int | None = None
    k_vec: int | None = None
    k_kw: int | None = None
    alpha: float = 0.5
    k1: float = 1.2
    b: float = 0.75
    pathways: tuple[str, ...] = PATHWAYS

    def __post_init__(self) -> None:
        if self.tau < 0:
            raise RouterConfigError("tau must be >= 0")
        for name in ("k_global", "k_vec", "k_kw"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise RouterConfigError(f"{name} must be >= 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise RouterConfigError("alpha must be in [0, 1]")
        if self.k1 < 0 or not 0.0 <= self.b <= 1.0:
            raise RouterConfigError("BM25 constants out of range (k1 >= 0, 0 <= b <= 1)")
        unknown = set(self.pathways) - set(PATHWAYS)
        if unknown:
            raise RouterConfigError(f"unknown pathways: {sorted(unknown)}")


@dataclass(frozen=True)
class Query:
    text: str
    terms: tuple[str, ...]
    embedding: np.ndarray | None
    tau: int
    k: Mapping[str, int] = field(default_factory=dict)


@dataclass(frozen=True)
class ScoredUnit:
    unit_id: str
    score: float


@dataclass(frozen=True)
class ActivationEntry:
    unit_id: str
    pathways: frozenset[str]
    scores: Mapping[str, float]
    fused: float


@dataclass(frozen=True)
class ActivationSet:
    entries: tuple[ActivationEntry, ...]
    candidates: tuple[str, ...]
    p_act: Mapping[str, float]
    per_pathway: Mapping[str, tuple[ScoredUnit, ...]]

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def unit_ids(self) -> list[str]:
        return [e.unit_id for e in self.entries]

    def attribution(self, unit_id: str) -> frozenset[str]:
        for e in self.entries:
            if e.unit_id == unit_id:
                return e.pathways
        raise KeyError(unit_id)

    def to_dict(self) -> dict:
        return {
            "entries": [
                {
                    "unit_id": e.unit_id,
                    "pathways": sorted(e.pathways),
                    "scores": {k: round(v, 6) for k, v in sorted(e.scores.items())},
                    "fused": round(e.fused, 6),
                }
                for e in self.entries
            ],
            "candidates": list(self.candidates),
        }


# -- BM25 ----------------------------------------------------------------

def bm25_idf(n_docs: int, df: int) -> float:
    return math.log((n_docs - df + 0.5) / (df + 0.5) + 1.0)


def bm25_scores(
    query_terms: Sequence[str],
    docs: Sequence[LexicalStats],
    df: Mapping[str, int],
    n_docs: int,
    avg_len: float,
    k1: float = 1.2,
    b: float = 0.75,
) -> np.ndarray:
    scores = np.zeros(len(docs), dtype=np.float64)
    if not docs or avg_len <= 0:
        return scores
    for term in query_terms:
        d = df.get(term, 0)
        if d == 0:
            continue
        idf = bm25_idf(n_docs, d)
        for i, doc in enumerate(docs):
            tf = doc.tf.get(term, 0)
            if tf:
                norm = k1 * (1.0 - b + b * doc.length / avg_len)
                scores[i] += idf * tf * (k1 + 1.0) / (tf + norm)
    return scores


def corpus_stats(docs: Sequence[LexicalStats]) -> tuple[dict[str, int], float]:
    df: Counter = Counter()
    total = 0
    for doc in docs:
        df.update(doc.tf.keys())
        total += doc.length
    return dict(df), (total / len(docs) if docs else 0.0)


# -- dense -----------------------------------------------------------------

def cosine_scores(query: np.ndarray | None, vectors: Sequence[np.ndarray | None]) -> np.ndarray:
    """Cosine per vector; NaN where a unit has no vector, 0 for zero norms."""
    out = np.full(len(vectors), np.nan, dtype=np.float64)
    if query is None:
        return np.where([v is None for v in vectors], np.nan, 0.0)
    q = np.asarray(query, dtype=np.float64)
    qn = np.linalg.norm(q)
    for i, v in enumerate(vectors):
        if v is None:
            continue
        v64 = np.asarray(v, dtype=np.float64)
        if v64.shape != q.shape:
            raise RouterConfigError(f"embedding dimension mismatch: query {q.shape}, unit {v64.shape}")
        vn = np.linalg.norm(v64)
        out[i] = 0.0 if qn == 0 or vn == 0 else float(np.dot(q, v64) / (qn * vn))
    return out


def min_max(scores: np.ndarray) -> np.ndarray:
    valid = ~np.isnan(scores)
    out = np.zeros_like(scores)
    if not valid.any():
        return out
    lo, hi = scores[valid].min(), scores[valid].max()
    if hi > lo:
        out[valid] = (scores[valid] - lo) / (hi - lo)
    elif hi > 0:
        out[valid] = 1.0
    return out


Scorer = Callable[[Query, ArchiveSnapshot], np.ndarray]


class Router:
    """Stateless between queries; all inputs come from the snapshot."""

    def __init__(
        self,
        embedder: EmbeddingProvider,
        config: RouterConfig | None = None,
        scorers: Mapping[str, Scorer] | None = None,
    ) -> None:
        self.embedder = embedder
        self.config = config or RouterConfig()
        self.scorers: dict[str, Scorer] = {
            "global": self.score_global,
            "vec": self.score_vec,
            "kw": self.score_kw,
        }
        if scorers:
            self.scorers.update(scorers)

    def make_query(self, text: str, tau: int | None = None, k: Mapping[str, int] | None = None) -> Query:
        try:
            emb = np.asarray(self.embedder.embed(text), dtype=np.float32)
        except EmbeddingError:
            emb = None
        cfg = self.config
        tau = cfg.tau if tau is None else tau
        if tau < 0:
            raise RouterConfigError("tau must be >= 0")
        ks = {"global": cfg.k_global, "vec": cfg.k_vec, "kw": cfg.k_kw}
        if k:
            ks.update(k)
        return Query(
            text=text,
            terms=tuple(analyze(text)),
            embedding=emb,
            tau=tau,
            k={p: (tau if v is None else v) for p, v in ks.items()},
        )

    # -- pathway scores over every unit in the snapshot --------------------

    def score_global(self, query: Query, snap: ArchiveSnapshot) -> np.ndarray:
        cfg = self.config
        units = snap.units
        dense = cosine_scores(query.embedding, [u.summary_embedding for u in units])
        docs = [LexicalStats.from_terms(analyze(u.summary.summary_text if u.summary else "")) for u in units]
        df, avg = corpus_stats(docs)
        lex = bm25_scores(query.terms, docs, df, len(docs), avg, cfg.k1, cfg.b)
        top = lex.max() if len(lex) else 0.0
        lex_norm = lex / top if top > 0 else lex
        scores = cfg.alpha * dense + (1.0 - cfg.alpha) * lex_norm
        missing = [u.summary is None or u.summary_embedding is None for u in units]
        scores[np.array(missing, dtype=bool)] = np.nan
        return scores

    def score_vec(self, query: Query, snap: ArchiveSnapshot) -> np.ndarray:
        return cosine_scores(query.embedding, [u.context_embedding for u in snap.units])

    def score_kw(self, query: Query, snap: ArchiveSnapshot) -> np.ndarray:
        cfg = self.config
        st = snap.stats
        return bm25_scores(
            query.terms, [u.lexical for u in snap.units], st.df, st.unit_count, st.avg_doc_len, cfg.k1, cfg.b
        )

    # -- top-k -------------------------------------------------------------

    @staticmethod
    def top_k(scores: np.ndarray, k: int, snap: ArchiveSnapshot, drop_zero: bool = False) -> list[ScoredUnit]:
        order = [
            i
            for i in range(len(snap.units))
            if not np.isnan(scores[i]) and not (drop_zero and scores[i] <= 0.0)
        ]
        # later units win ties
        order.sort(key=lambda i: (-scores[i], -i))
        return [ScoredUnit(snap.units[i].unit_id, float(scores[i])) for i in order[:k]]

    def route_global(self, query: Query, snap: ArchiveSnapshot, k: int | None = None) -> list[ScoredUnit]:
        return self.top_k(self.scorers["global"](query, snap), query.k["global"] if k is None else k, snap)

    def route_vec(self, query: Query, snap: ArchiveSnapshot, k: int | None = None) -> list[ScoredUnit]:
        return self.top_k(self.scorers["vec"](query, snap), query.k["vec"] if k is None else k, snap)

    def route_kw(self, query: Query, snap: ArchiveSnapshot, k: int | None = None) -> list[ScoredUnit]:
        return self.top_k(self.scorers["kw"](query, snap), query.k["kw"] if k is None else k, snap, drop_zero=True)

    def activate(
        self,
        query: Query,
        snap: ArchiveSnapshot,
        disabled: Sequence[str] = (),
        parallel: bool = True,
    ) -> ActivationSet:
        enabled = [p for p in self.config.pathways if p not in disabled]
        if not snap.units or not enabled:
            return ActivationSet((), (), {}, {p: () for p in enabled})
        if parallel and len(enabled) > 1:
            with ThreadPoolExecutor(max_workers=len(enabled)) as pool:
                futures = {p: pool.submit(self.scorers[p], query, snap) for p in enabled}
                raw = {p: np.asarray(f.result(), dtype=np.float64) for p, f in futures.items()}
        else:
            raw = {p: np.asarray(self.scorers[p](query, snap), dtype=np.float64) for p in enabled}

        per_pathway = {
            p: tuple(self.top_k(raw[p], query.k[p], snap, drop_zero=(p == "kw"))) for p in enabled
        }
        norm = {p: min_max(raw[p]) for p in enabled}
        fused = np.max(np.vstack([norm[p] for p in enabled]), axis=0)
        position = {u.unit_id: i for i, u in enumerate(snap.units)}

        flags: dict[str, set[str]] = {}
        for p in enabled:
            for su in per_pathway[p]:
                flags.setdefault(su.unit_id, set()).add(p)
        candidates = sorted(flags, key=lambda uid: (-fused[position[uid]], -position[uid]))
        entries = []
        for uid in candidates[: query.tau]:
            i = position[uid]
            entries.append(
                ActivationEntry(
                    unit_id=uid,
                    pathways=frozenset(flags[uid]),
                    scores={p: float(raw[p][i]) for p in enabled if not np.isnan(raw[p][i])},
                    fused=float(fused[i]),
                )
            )
        p_act = {u.unit_id: float(fused[i]) for i, u in enumerate(snap.units)}
        return ActivationSet(tuple(entries), tuple(candidates), p_act, per_pathway)
