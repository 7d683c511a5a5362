"""Answer metrics: token F1 and sentence-level BLEU-1.

Normalization (F1): lowercase, punctuation removed (replaced by a space),
English articles ``a``, ``an``, ``the`` dropped, whitespace-split.
BLEU-1 uses the same normalization but keeps articles, so clipping
behaves as usual on short function words.

Abstention: when the gold answer is an abstention phrase, a prediction that
also abstains is scored against the gold text verbatim (F1 = BLEU-1 = 1).
"""

from __future__ import annotations

import math
import string
import unicodedata
from collections import Counter
from typing import Iterable

ARTICLES = frozenset({"a", "an", "the"})

ABSTENTION_PATTERNS = (
    "not mentioned",
    "no information",
    "information is missing",
    "information missing",
    "not available",
    "not in the memory",
    "not provided",
    "cannot be determined",
    "unknown",
    "does not mention",
    "no mention",
    "not stated",
)

_PUNCT = set(string.punctuation)


def _strip_punct(text: str) -> str:
    return "".join(
        " " if ch in _PUNCT or unicodedata.category(ch).startswith("P") else ch for ch in text
    )


def normalize_tokens(text: str, drop_articles: bool = True) -> list[str]:
    tokens = _strip_punct(text.lower()).split()
    if drop_articles:
        tokens = [t for t in tokens if t not in ARTICLES]
    return tokens


def is_abstention(text: str) -> bool:
    norm = " ".join(_strip_punct(text.lower()).split())
    return any(p in norm for p in ABSTENTION_PATTERNS)


def _golds(gold: str | Iterable[str]) -> list[str]:
    return [gold] if isinstance(gold, str) else list(gold)


def _abstain_match(prediction: str, gold: str) -> bool:
    return is_abstention(gold) and is_abstention(prediction)


def _f1_single(prediction: str, gold: str) -> float:
    if _abstain_match(prediction, gold):
        return 1.0
    pred, ref = normalize_tokens(prediction), normalize_tokens(gold)
    if not pred and not ref:
        return 1.0
    if not pred or not ref:
        return 0.0
    common = sum((Counter(pred) & Counter(ref)).values())
    if common == 0:
        return 0.0
    precision, recall = common / len(pred), common / len(ref)
    return 2 * precision * recall / (precision + recall)


def f1(prediction: str, gold: str | Iterable[str]) -> float:
    """Token F1, maximized over gold answers."""
    return max((_f1_single(prediction, g) for g in _golds(gold)), default=0.0)


def _bleu1_single(prediction: str, gold: str) -> float:
    if _abstain_match(prediction, gold):
        return 1.0
    pred = normalize_tokens(prediction, drop_articles=False)
    ref = normalize_tokens(gold, drop_articles=False)
    if not pred or not ref:
        return 0.0
    ref_counts = Counter(ref)
    clipped = sum(min(c, ref_counts[t]) for t, c in Counter(pred).items())
    precision = clipped / len(pred)
    bp = 1.0 if len(pred) >= len(ref) else math.exp(1.0 - len(ref) / len(pred))
    return precision * bp


def bleu1(prediction: str, gold: str | Iterable[str]) -> float:
    """Clipped unigram precision times brevity penalty, maximized over golds."""
    return max((_bleu1_single(prediction, g) for g in _golds(gold)), default=0.0)
