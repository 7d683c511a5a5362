"""Sliding-window segmentation of a token stream into episodic contexts.

Context ``i`` (1-based) covers positions ``(i-1)*S < t <= (i-1)*S + L``.
Streaming ingestion goes through :class:`Segmenter`, which keeps one active
context, archives it the moment it holds ``L`` tokens and seeds the successor
with the trailing ``L - S`` tokens.  Work per appended token does not depend
on how many contexts have already been archived.

With ``respect_turns`` enabled a window never closes in the middle of a
record (a dialogue turn or a document): when capacity is reached the window
closes before the last record it holds, so archived contexts may be shorter
than ``L``.  The carried overlap is then the run of trailing whole records
that fits in ``L - S`` tokens.  A single record longer than ``L`` is split.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from epimem.analyzer import DEFAULT_TOKENIZER, Tokenizer


class SegmenterConfigError(ValueError):
    pass


class SegmentStateError(RuntimeError):
    pass


class StreamError(ValueError):
    pass


@dataclass(frozen=True)
class SegmenterConfig:
    window_length: int = 8192
    stride: int = 7680
    respect_turns: bool = False

    def __post_init__(self) -> None:
        for name in ("window_length", "stride"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int):
                raise SegmenterConfigError(f"{name} must be an integer, got {value!r}")
        if self.stride <= 0:
            raise SegmenterConfigError(f"stride must be positive, got {self.stride}")
        if self.stride > self.window_length:
            raise SegmenterConfigError(
                f"stride ({self.stride}) must not exceed window_length ({self.window_length})"
            )

    @property
    def overlap(self) -> int:
        return self.window_length - self.stride


@dataclass(frozen=True)
class Record:
    """Provenance shared by the tokens of one turn or document."""

    ordinal: int
    speaker: str | None = None
    timestamp: str | None = None
    source_id: str | None = None
    session_id: str | None = None
    title: str | None = None

    def header(self) -> str:
        parts = []
        if self.timestamp:
            parts.append(f"[{self.timestamp}]")
        if self.title:
            parts.append(f"{self.title}:")
        if self.speaker:
            parts.append(f"{self.speaker}:")
        return " ".join(parts)

    def to_dict(self) -> dict:
        return {
            k: v
            for k, v in (
                ("ordinal", self.ordinal),
                ("speaker", self.speaker),
                ("timestamp", self.timestamp),
                ("source_id", self.source_id),
                ("session_id", self.session_id),
                ("title", self.title),
            )
            if v is not None
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Record":
        return cls(**data)


_ANON = Record(ordinal=0)


@dataclass(frozen=True)
class Token:
    text: str
    position: int
    record: Record = _ANON


class TokenStream:
    """Ordered tokens with contiguous 1-based positions."""

    def __init__(self, tokens: Iterable[Token] = ()) -> None:
        self.tokens: list[Token] = list(tokens)
        for expected, tok in enumerate(self.tokens, start=self.start):
            if tok.position != expected:
                raise StreamError(
                    f"token positions must be contiguous; expected {expected}, got {tok.position}"
                )

    @property
    def start(self) -> int:
        return self.tokens[0].position if self.tokens else 1

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self) -> Iterator[Token]:
        return iter(self.tokens)

    def __getitem__(self, item):
        return self.tokens[item]

    @classmethod
    def from_words(cls, words: Sequence[str], start: int = 1) -> "TokenStream":
        return cls(Token(w, start + i) for i, w in enumerate(words))

    @classmethod
    def from_text(cls, text: str, tokenizer: Tokenizer = DEFAULT_TOKENIZER) -> "TokenStream":
        return cls.from_words(tokenizer.tokenize(text))

    @classmethod
    def from_records(
        cls,
        records: Iterable[tuple[Record, str]],
        tokenizer: Tokenizer = DEFAULT_TOKENIZER,
        start: int = 1,
    ) -> "TokenStream":
        tokens: list[Token] = []
        pos = start
        for record, text in records:
            for word in tokenizer.tokenize(text):
                tokens.append(Token(word, pos, record))
                pos += 1
        return cls(tokens)


def read_records(path: str | Path) -> list[tuple[Record, str]]:
    """Read an ingest file: JSON lines ``{"speaker"?, "timestamp"?, "text"}``.

    Lines that are not JSON objects are taken as anonymous plain-text records.
    Blank lines are skipped.
    """
    out: list[tuple[Record, str]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            data = None
            if line.lstrip().startswith("{"):
                try:
                    data = json.loads(line)
                except json.JSONDecodeError:
                    data = None
            if isinstance(data, dict):
                if not isinstance(data.get("text"), str):
                    raise StreamError(f"{path}:{lineno}: record has no string 'text' field")
                rec = Record(
                    ordinal=len(out),
                    speaker=data.get("speaker"),
                    timestamp=data.get("timestamp"),
                    source_id=data.get("id"),
                )
                out.append((rec, data["text"]))
            else:
                out.append((Record(ordinal=len(out)), line.rstrip("\n")))
    return out


class ContextState(str, Enum):
    ACTIVE = "active"
    ARCHIVED = "archived"


def render_tokens(tokens: Sequence[Token]) -> str:
    """Rebuild text: one line per record run, each headed by its provenance."""
    lines: list[str] = []
    run: list[str] = []
    current: Record | None = None
    for tok in tokens:
        if current is not None and tok.record != current:
            lines.append(_render_line(current, run))
            run = []
        current = tok.record
        run.append(tok.text)
    if current is not None:
        lines.append(_render_line(current, run))
    return "\n".join(lines)


def _render_line(record: Record, words: list[str]) -> str:
    header = record.header()
    body = " ".join(words)
    return f"{header} {body}" if header else body


@dataclass
class EpisodicContext:
    index: int
    tokens: list[Token] = field(default_factory=list)
    state: ContextState = ContextState.ACTIVE
    carried: int = 0

    @property
    def start(self) -> int:
        return self.tokens[0].position if self.tokens else 0

    @property
    def end(self) -> int:
        return self.tokens[-1].position if self.tokens else 0

    @property
    def positions(self) -> list[int]:
        return [t.position for t in self.tokens]

    @property
    def span(self) -> range:
        return range(self.start, self.end + 1)

    @property
    def text(self) -> str:
        return render_tokens(self.tokens)

    @property
    def records(self) -> list[Record]:
        seen: dict[Record, None] = {}
        for tok in self.tokens:
            seen.setdefault(tok.record, None)
        return list(seen)

    def __len__(self) -> int:
        return len(self.tokens)

    def _freeze(self) -> "EpisodicContext":
        return EpisodicContext(
            index=self.index,
            tokens=tuple(self.tokens),  # type: ignore[arg-type]
            state=ContextState.ARCHIVED,
            carried=self.carried,
        )


def _trailing_records(tokens: Sequence[Token], budget: int) -> int:
    """Length of the longest run of whole trailing records within ``budget``."""
    n = len(tokens)
    taken = 0
    i = n
    while i > 0:
        rec = tokens[i - 1].record
        j = i
        while j > 0 and tokens[j - 1].record == rec:
            j -= 1
        if j == 0:
            # the first record may have started in an earlier context
            break
        if taken + (i - j) > budget:
            break
        taken += i - j
        i = j
    return taken


def _close(active: EpisodicContext, cfg: SegmenterConfig) -> tuple[EpisodicContext, EpisodicContext]:
    """Archive a full active context; return (archived, successor)."""
    buf = active.tokens
    delta = cfg.overlap
    cut = len(buf)
    if cfg.respect_turns:
        last_rec = buf[-1].record
        i = len(buf)
        while i > 0 and buf[i - 1].record == last_rec:
            i -= 1
        if i > active.carried:
            cut = i
    kept, rest = buf[:cut], buf[cut:]
    carry = delta
    if cfg.respect_turns and cut < len(buf):
        whole = _trailing_records(kept, delta)
        if whole:
            carry = whole
    carry = min(carry, len(kept))
    archived = EpisodicContext(active.index, list(kept), ContextState.ACTIVE, active.carried)._freeze()
    successor = EpisodicContext(
        index=active.index + 1,
        tokens=list(kept[len(kept) - carry:]) + list(rest),
        carried=carry,
    )
    return archived, successor


def append(
    active: EpisodicContext, new_tokens: Iterable[Token], cfg: SegmenterConfig
) -> tuple[EpisodicContext, list[EpisodicContext]]:
    """Append tokens to the active context, archiving it whenever it fills up.

    Returns the (possibly new) active context and the contexts archived along
    the way.  ``active`` is mutated in place when it stays active.
    """
    if active.state is not ContextState.ACTIVE:
        raise SegmentStateError(f"context {active.index} is archived and immutable")
    archived: list[EpisodicContext] = []
    L = cfg.window_length
    for tok in new_tokens:
        if active.tokens and tok.position != active.tokens[-1].position + 1:
            raise StreamError(
                f"expected position {active.tokens[-1].position + 1}, got {tok.position}"
            )
        active.tokens.append(tok)
        while len(active.tokens) >= L:
            done, active = _close(active, cfg)
            archived.append(done)
    return active, archived


class Segmenter:
    """Single-writer incremental segmenter."""

    def __init__(self, cfg: SegmenterConfig, first_index: int = 1) -> None:
        self.cfg = cfg
        self._active = EpisodicContext(index=first_index)
        self.archived_count = 0

    def append(self, tokens: Iterable[Token]) -> list[EpisodicContext]:
        self._active, done = append(self._active, tokens, self.cfg)
        self.archived_count += len(done)
        return done

    @property
    def active(self) -> EpisodicContext | None:
        """The filling context, or None when it holds only carried-over tokens."""
        if len(self._active.tokens) > self._active.carried:
            return self._active
        return None

    @property
    def next_position(self) -> int:
        toks = self._active.tokens
        return toks[-1].position + 1 if toks else 1


def segment_stream(stream: TokenStream | Sequence[Token], cfg: SegmenterConfig) -> list[EpisodicContext]:
    """Partition a whole stream; the last context is active unless it is full.

    A context consisting solely of the previous context's overlap adds no new
    tokens and is not emitted.
    """
    tokens = list(stream)
    if not tokens:
        return []
    if cfg.respect_turns:
        seg = Segmenter(cfg)
        out = seg.append(tokens)
        if seg.active is not None:
            out.append(seg.active)
        return out
    L, S = cfg.window_length, cfg.stride
    first = tokens[0].position
    n = len(tokens)
    out: list[EpisodicContext] = []
    i = 1
    while True:
        lo = (i - 1) * S
        if lo >= n or (i > 1 and lo + cfg.overlap >= n):
            break
        chunk = tokens[lo:lo + L]
        ctx = EpisodicContext(index=i, tokens=chunk, carried=cfg.overlap if i > 1 else 0)
        assert chunk[0].position == first + lo
        out.append(ctx._freeze() if len(chunk) == L else ctx)
        i += 1
    return out
