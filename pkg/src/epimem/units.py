"""Memory unit records shared by the archive, indexer and router."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from epimem.segmenter import ContextState, EpisodicContext, Record


class UnitState(str, Enum):
    ARCHIVED = "archived"
    ACTIVE_TAIL = "active-tail"


def make_unit_id(stream_id: str, index: int) -> str:
    if ":" in stream_id:
        raise ValueError(f"stream id may not contain ':' ({stream_id!r})")
    return f"{stream_id}:{index}"


def split_unit_id(unit_id: str) -> tuple[str, int]:
    stream, _, idx = unit_id.rpartition(":")
    return stream, int(idx)


def unit_sort_key(unit_id: str) -> tuple[str, int]:
    return split_unit_id(unit_id)


@dataclass(frozen=True)
class SummaryRecord:
    unit_id: str
    summary_text: str
    speakers: tuple[str, ...] = ()
    time_period: str = ""
    key_items: tuple[str, ...] = ()
    main_events: str = ""
    degraded: bool = False

    def to_dict(self) -> dict:
        return {
            "unit_id": self.unit_id,
            "summary_text": self.summary_text,
            "speakers": list(self.speakers),
            "time_period": self.time_period,
            "key_items": list(self.key_items),
            "main_events": self.main_events,
            "degraded": self.degraded,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SummaryRecord":
        return cls(
            unit_id=d["unit_id"],
            summary_text=d["summary_text"],
            speakers=tuple(d.get("speakers", ())),
            time_period=d.get("time_period", ""),
            key_items=tuple(d.get("key_items", ())),
            main_events=d.get("main_events", ""),
            degraded=bool(d.get("degraded", False)),
        )


@dataclass(frozen=True)
class LexicalStats:
    tf: dict[str, int]
    length: int

    @classmethod
    def from_terms(cls, terms: list[str]) -> "LexicalStats":
        return cls(dict(Counter(terms)), len(terms))


@dataclass(frozen=True)
class MemoryUnit:
    """One stored episodic context plus its routing representations.

    ``summary``, ``context_embedding`` and ``summary_embedding`` may be None
    while indexing is deferred; once set they are never replaced.
    """

    unit_id: str
    text: str
    start: int
    end: int
    state: UnitState = UnitState.ARCHIVED
    records: tuple[Record, ...] = ()
    lexical: LexicalStats | None = None
    summary: SummaryRecord | None = None
    context_embedding: np.ndarray | None = field(default=None, compare=False)
    summary_embedding: np.ndarray | None = field(default=None, compare=False)

    @property
    def stream_id(self) -> str:
        return split_unit_id(self.unit_id)[0]

    @property
    def index(self) -> int:
        return split_unit_id(self.unit_id)[1]

    @property
    def time_range(self) -> tuple[str | None, str | None]:
        stamps = [r.timestamp for r in self.records if r.timestamp]
        if not stamps:
            return None, None
        return stamps[0], stamps[-1]

    @property
    def source_ids(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(r.source_id for r in self.records if r.source_id))

    @property
    def indexed(self) -> bool:
        return (
            self.summary is not None
            and self.context_embedding is not None
            and self.summary_embedding is not None
        )

    def with_index(self, **fields) -> "MemoryUnit":
        return replace(self, **fields)

    def same_content(self, other: "MemoryUnit") -> bool:
        return (
            self.unit_id == other.unit_id
            and self.text == other.text
            and self.start == other.start
            and self.end == other.end
            and self.state == other.state
        )

    @classmethod
    def from_context(
        cls, stream_id: str, ctx: EpisodicContext, lexical: LexicalStats | None = None
    ) -> "MemoryUnit":
        state = UnitState.ARCHIVED if ctx.state is ContextState.ARCHIVED else UnitState.ACTIVE_TAIL
        return cls(
            unit_id=make_unit_id(stream_id, ctx.index),
            text=ctx.text,
            start=ctx.start,
            end=ctx.end,
            state=state,
            records=tuple(ctx.records),
            lexical=lexical,
        )
