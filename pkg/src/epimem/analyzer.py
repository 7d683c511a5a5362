"""Text analysis shared by indexing, query scoring and mock token counting.

Two tokenizers live here and they are deliberately different:

* ``analyze`` is the lexical analyzer: NFKC-normalize, lowercase, then keep
  maximal runs of Unicode letters/digits.  Everything else (punctuation,
  underscores, symbols, whitespace) separates terms.  BM25 statistics, the
  hashing embedder and the mock backends' token counts all use it, so a
  query and a document containing it always yield matching terms.
* ``WhitespaceTokenizer`` is the segmentation tokenizer: surface tokens are
  maximal non-whitespace runs, so a context's text can be rebuilt verbatim
  up to whitespace normalization.  Window lengths are counted in these.
"""

from __future__ import annotations

import re
import unicodedata
from typing import Protocol, Sequence

_TERM_RE = re.compile(r"[^\W_]+", re.UNICODE)
_WS_RE = re.compile(r"\S+")

STOPWORDS = frozenset(
    """a an and are as at be been but by did do does for from had has have he her his
    how i if in into is it its me my of on or our she so than that the their them then
    there they this to up was we were what when where which who whom why will with you
    your yes no not can could would should about after before just also very""".split()
)


def analyze(text: str) -> list[str]:
    """Return the analyzed terms of ``text`` in order (duplicates kept)."""
    if not text:
        return []
    return _TERM_RE.findall(unicodedata.normalize("NFKC", text).lower())


def content_terms(text: str) -> list[str]:
    """Analyzed terms minus common English function words."""
    return [t for t in analyze(text) if t not in STOPWORDS]


def count_tokens(text: str) -> int:
    return len(analyze(text))


def normalize_whitespace(text: str) -> str:
    return " ".join(text.split())


class Tokenizer(Protocol):
    name: str

    def tokenize(self, text: str) -> list[str]: ...

    def detokenize(self, tokens: Sequence[str]) -> str: ...


class WhitespaceTokenizer:
    name = "whitespace"

    def tokenize(self, text: str) -> list[str]:
        return _WS_RE.findall(text)

    def detokenize(self, tokens: Sequence[str]) -> str:
        return " ".join(tokens)


DEFAULT_TOKENIZER = WhitespaceTokenizer()
